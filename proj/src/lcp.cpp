#include "geoplace/lcp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace geoplace::lcp {
namespace {

// Pivot elements below this fraction of the column's largest entry count as
// zero.
constexpr double kRelativePivot = 1e-9;

// Variable numbering: w_i -> i, z_i -> n + i, z0 -> 2n.
class LemkeTableau {
 public:
  LemkeTableau(const MatX& M, const VecX& q)
      : n_(static_cast<int>(q.size())), M_(M), q_(q),
        basis_(n_), binv_(MatX::Identity(n_, n_)) {
    for (int i = 0; i < n_; ++i) basis_[i] = i;
  }

  VecX column(int var) const {
    if (var < n_) return binv_.col(var);
    if (var < 2 * n_) return -binv_ * M_.col(var - n_);
    return -binv_ * VecX::Ones(n_);
  }

  VecX values() const { return binv_ * q_; }

  void pivot(int row, int entering, const VecX& col) {
    const double p = col[row];
    binv_.row(row) /= p;
    for (int i = 0; i < n_; ++i) {
      if (i == row || col[i] == 0.0) continue;
      binv_.row(i) -= col[i] * binv_.row(row);
    }
    basis_[row] = entering;
  }

  // Lexicographic minimum ratio over rows with col_i > tol. Returns -1 on ray.
  int ratio_test(const VecX& col, double tol) const {
    const VecX beta = values();
    const double cut = std::max(tol, kRelativePivot * col.cwiseAbs().maxCoeff());
    std::vector<int> candidates;
    for (int i = 0; i < n_; ++i) {
      if (col[i] > cut) candidates.push_back(i);
    }
    if (candidates.empty()) return -1;
    // Prefer dropping z0 whenever it ties for the minimum ratio.
    double best = std::numeric_limits<double>::infinity();
    for (int i : candidates) best = std::min(best, beta[i] / col[i]);
    std::vector<int> ties;
    for (int i : candidates) {
      if (beta[i] / col[i] <= best + 1e-13 * (1.0 + std::abs(best))) ties.push_back(i);
    }
    for (int i : ties) {
      if (basis_[i] == 2 * n_) return i;
    }
    for (int k = 0; k < n_ && ties.size() > 1; ++k) {
      double m = std::numeric_limits<double>::infinity();
      for (int i : ties) m = std::min(m, binv_(i, k) / col[i]);
      std::vector<int> next;
      for (int i : ties) {
        if (binv_(i, k) / col[i] <= m + 1e-13 * (1.0 + std::abs(m))) next.push_back(i);
      }
      ties.swap(next);
    }
    return ties.front();
  }

  int basis(int row) const { return basis_[row]; }
  int size() const { return n_; }

 private:
  int n_;
  const MatX& M_;
  const VecX& q_;
  std::vector<int> basis_;
  MatX binv_;
};

double violation(const LcpProblem& p, const VecX& l) {
  const VecX a = p.M * l + p.b;
  double v = 0.0;
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    v = std::max({v, -l[i], -a[i], std::abs(l[i] * a[i])});
  }
  return v;
}

LcpSolution finish(const LcpProblem& p, VecX lambda, int pivots, double threshold) {
  LcpSolution s;
  s.lambda = lambda.cwiseMax(0.0);
  s.a = p.M * s.lambda + p.b;
  s.active.resize(s.lambda.size());
  for (Eigen::Index i = 0; i < s.lambda.size(); ++i) s.active[i] = s.lambda[i] > threshold;
  s.pivots = pivots;
  return s;
}

// Re-solves the terminal active block directly. Keeps the pivoting result if
// the direct solve is worse.
VecX polish(const LcpProblem& p, const VecX& lambda) {
  std::vector<int> idx;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] > 0.0) idx.push_back(static_cast<int>(i));
  }
  if (idx.empty()) return lambda;
  const auto k = static_cast<Eigen::Index>(idx.size());
  MatX maa(k, k);
  VecX ba(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    ba[r] = p.b[idx[r]];
    for (Eigen::Index c = 0; c < k; ++c) maa(r, c) = p.M(idx[r], idx[c]);
  }
  Eigen::FullPivLU<MatX> lu(maa);
  if (!lu.isInvertible()) return lambda;
  const VecX la = lu.solve(-ba);
  VecX refined = VecX::Zero(lambda.size());
  for (Eigen::Index r = 0; r < k; ++r) refined[idx[r]] = la[r];
  return violation(p, refined) <= violation(p, lambda) ? refined : lambda;
}

}  // namespace

LcpSolution lcp_solve(const LcpProblem& problem, const LcpOptions& options) {
  const int n = problem.size();
  if (problem.M.rows() != n || problem.M.cols() != n) {
    throw GeoplaceError("lcp_solve: M must be n x n with n = size(b)");
  }
  if (!problem.M.allFinite() || !problem.b.allFinite()) {
    throw GeoplaceError("lcp_solve: non-finite problem data");
  }
  if (n == 0 || problem.b.minCoeff() >= 0.0) {
    return finish(problem, VecX::Zero(n), 0, options.active_threshold);
  }
  const int max_pivots = options.max_pivots > 0 ? options.max_pivots : 50 * (n + 1);
  LemkeTableau tab(problem.M, problem.b);

  // z0 enters; the row with the most negative b leaves (lowest index on ties).
  int row = 0;
  problem.b.minCoeff(&row);
  int entering = 2 * n;
  tab.pivot(row, entering, tab.column(entering));
  int leaving = row;  // w_row left the basis
  int pivots = 1;

  while (true) {
    entering = leaving < n ? leaving + n : leaving - n;
    const VecX col = tab.column(entering);
    row = tab.ratio_test(col, options.pivot_tolerance);
    if (row < 0) throw LcpUnsolvable("lcp_solve: secondary ray");
    leaving = tab.basis(row);
    tab.pivot(row, entering, col);
    if (++pivots > max_pivots) throw LcpUnsolvable("lcp_solve: pivot cap exceeded");
    if (leaving == 2 * n) break;
  }

  const VecX beta = tab.values();
  VecX lambda = VecX::Zero(n);
  for (int i = 0; i < n; ++i) {
    const int var = tab.basis(i);
    if (var >= n && var < 2 * n) lambda[var - n] = beta[i];
  }
  const VecX polished = polish(problem, lambda.cwiseMax(0.0));
  const double scale = 1.0 + problem.b.cwiseAbs().maxCoeff();
  if (violation(problem, polished) > options.acceptance_tolerance * scale * scale) {
    throw LcpUnsolvable("lcp_solve: pivoting lost accuracy");
  }
  return finish(problem, polished, pivots, options.active_threshold);
}

LcpSolution lcp_solve_regularized(const LcpProblem& problem, double eps,
                                  const LcpOptions& options) {
  try {
    return lcp_solve(problem, options);
  } catch (const LcpUnsolvable&) {
    LcpProblem reg = problem;
    reg.M += eps * MatX::Identity(problem.size(), problem.size());
    LcpSolution s = lcp_solve(reg, options);
    s.a = problem.M * s.lambda + problem.b;
    return s;
  }
}

MatX lcp_gradient(const LcpProblem& problem, const LcpSolution& solution,
                  const std::vector<MatX>& dM, const MatX& db,
                  const LcpGradientOptions& options, bool* singular) {
  const int n = problem.size();
  const auto dirs = static_cast<Eigen::Index>(db.cols());
  if (db.rows() != n || (!dM.empty() && static_cast<Eigen::Index>(dM.size()) != dirs)) {
    throw GeoplaceError("lcp_gradient: derivative shapes do not match the problem");
  }
  if (singular) *singular = false;
  MatX out = MatX::Zero(n, dirs);
  std::vector<int> idx;
  for (int i = 0; i < n; ++i) {
    if (solution.lambda[i] > options.active_threshold) idx.push_back(i);
  }
  if (idx.empty() || dirs == 0) return out;

  const auto k = static_cast<Eigen::Index>(idx.size());
  MatX maa(k, k);
  MatX rhs(k, dirs);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) maa(r, c) = problem.M(idx[r], idx[c]);
  }
  for (Eigen::Index d = 0; d < dirs; ++d) {
    VecX full = db.col(d);
    if (!dM.empty()) full += dM[d] * solution.lambda;
    for (Eigen::Index r = 0; r < k; ++r) rhs(r, d) = -full[idx[r]];
  }

  Eigen::CompleteOrthogonalDecomposition<MatX> cod(maa);
  cod.setThreshold(1e-12);
  const MatX x = cod.solve(rhs);
  if (cod.rank() < k) {
    if (singular) *singular = true;
    const double res = (maa * x - rhs).norm();
    if (!options.allow_singular && res > 1e-8 * (1.0 + rhs.norm())) {
      throw SingularActiveBlock("lcp_gradient: inconsistent rank-deficient active block");
    }
  }
  for (Eigen::Index r = 0; r < k; ++r) out.row(idx[r]) = x.row(r);
  return out;
}

double complementarity_residual(const LcpSolution& s) {
  double neg = 0.0;
  if (s.lambda.size() > 0) neg = std::max({0.0, -s.lambda.minCoeff(), -s.a.minCoeff()});
  return std::abs(s.lambda.dot(s.a)) + neg;
}

}  // namespace geoplace::lcp
