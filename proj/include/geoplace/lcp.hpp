#pragma once

// Linear complementarity problems: find lambda >= 0 with a = M lambda + b,
// a >= 0 and lambda^T a = 0.

#include <vector>

#include "geoplace/types.hpp"

namespace geoplace::lcp {

struct LcpProblem {
  MatX M;
  VecX b;

  int size() const { return static_cast<int>(b.size()); }
};

struct LcpSolution {
  VecX lambda;
  VecX a;
  std::vector<bool> active;  // lambda_i > active threshold
  int pivots = 0;
};

struct LcpOptions {
  int max_pivots = 0;  // 0 selects 50 * (n + 1)
  double pivot_tolerance = 1e-12;
  double active_threshold = 1e-10;
  // Largest accepted complementarity violation, relative to (1 + |b|_inf)^2.
  double acceptance_tolerance = 1e-9;
};

class LcpUnsolvable : public GeoplaceError {
 public:
  using GeoplaceError::GeoplaceError;
};

class SingularActiveBlock : public GeoplaceError {
 public:
  using GeoplaceError::GeoplaceError;
};

/// Lemke's method with covering vector 1 and lexicographic ratio test; the
/// terminal basis is re-solved directly to remove pivoting round-off.
LcpSolution lcp_solve(const LcpProblem& problem, const LcpOptions& options = {});

/// Retries once on M + eps*I when plain pivoting fails.
LcpSolution lcp_solve_regularized(const LcpProblem& problem, double eps = 1e-9,
                                  const LcpOptions& options = {});

struct LcpGradientOptions {
  double active_threshold = 1e-10;
  // Return the least-norm solution for a rank-deficient active block instead
  // of throwing SingularActiveBlock when the block system is inconsistent.
  bool allow_singular = false;
};

/// d lambda / d theta by implicit differentiation of the active block:
/// M_AA dl_A = -(dM lambda + db)_A, zero rows elsewhere. Degenerate indices
/// (lambda_i = a_i = 0) count as inactive. `dM` holds one n x n matrix per
/// direction, `db` is n x P. Rank-deficient blocks use the least-norm
/// solution; `singular`, when given, reports whether that happened.
MatX lcp_gradient(const LcpProblem& problem, const LcpSolution& solution,
                  const std::vector<MatX>& dM, const MatX& db,
                  const LcpGradientOptions& options = {},
                  bool* singular = nullptr);

/// |lambda^T a| plus the magnitude of any negative component.
double complementarity_residual(const LcpSolution& solution);

}  // namespace geoplace::lcp
