#include "geoplace/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace geoplace::estimation {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec6 weights(double length) {
  Vec6 w;
  w << Vec3::Constant(1.0 / length), Vec3::Ones();
  return w;
}

VecX scale_of(const EstimatorSettings& s, int p) {
  if (s.scale.size() == 0) return VecX::Ones(p);
  if (s.scale.size() != p || s.scale.minCoeff() <= 0.0) {
    throw GeoplaceError("estimator scale must have one positive entry per parameter");
  }
  return s.scale;
}

}  // namespace

void HistoryWindow::validate() const {
  const auto h = actions.size();
  if (h < 1) throw GeoplaceError("HistoryWindow: needs at least one action");
  if (states.size() != h + 1 || measured.size() != h) {
    throw GeoplaceError("HistoryWindow: expected H+1 states, H actions and H measurements");
  }
  if (start_step < 0) throw GeoplaceError("HistoryWindow: negative start step");
}

std::vector<dynamics::WrenchWithSensitivity> rollout(const HistoryWindow& window,
                                                     const GeomParam& theta,
                                                     const Simulator& sim, bool sensitivities,
                                                     const EstimatorSettings& settings) {
  window.validate();
  dynamics::BodyModel model = sim.model;
  model.contact.penetration_tolerance =
      std::max(model.contact.penetration_tolerance, settings.rollout_penetration_tolerance);
  const int p = theta.size();
  dynamics::RobotState state = window.states.front();
  dynamics::StateSensitivity sens = dynamics::StateSensitivity::zero(p);
  std::vector<dynamics::WrenchWithSensitivity> out;
  out.reserve(window.actions.size());
  for (const auto& action : window.actions) {
    auto r = dynamics::step(sim.shapes, model, state, sens, action, theta, {sensitivities});
    out.push_back(std::move(r.wrench));
    state = r.state;
    if (sensitivities) sens = std::move(r.sens);
  }
  return out;
}

double residual(const std::vector<Wrench>& measured, const std::vector<Wrench>& predicted,
                double characteristic_length) {
  if (measured.size() != predicted.size()) {
    throw GeoplaceError("residual: sequences differ in length");
  }
  const Vec6 w = weights(characteristic_length);
  double r = 0.0;
  for (std::size_t k = 0; k < measured.size(); ++k) {
    r += (w.asDiagonal() * (measured[k].stacked() - predicted[k].stacked())).squaredNorm();
  }
  return r;
}

RowX residual_gradient(const std::vector<Wrench>& measured,
                       const std::vector<dynamics::WrenchWithSensitivity>& predicted,
                       double characteristic_length) {
  if (measured.size() != predicted.size() || predicted.empty()) {
    throw GeoplaceError("residual_gradient: sequences differ in length or are empty");
  }
  const Vec6 w2 = weights(characteristic_length).array().square();
  RowX g = RowX::Zero(predicted.front().dvalue_dtheta.cols());
  for (std::size_t k = 0; k < measured.size(); ++k) {
    const Vec6 diff = measured[k].stacked() - predicted[k].value.stacked();
    g -= 2.0 * (w2.asDiagonal() * diff).transpose() * predicted[k].dvalue_dtheta;
  }
  return g;
}

CostEvaluation evaluate(const HistoryWindow& window, const GeomParam& theta,
                        const Simulator& sim, const EstimatorSettings& settings,
                        bool gradient) {
  CostEvaluation e;
  try {
    const auto pred = rollout(window, theta, sim, gradient, settings);
    std::vector<Wrench> values;
    values.reserve(pred.size());
    for (const auto& y : pred) values.push_back(y.value);
    e.cost = residual(window.measured, values, settings.characteristic_length);
    if (gradient) e.gradient = residual_gradient(window.measured, pred, settings.characteristic_length);
    if (!std::isfinite(e.cost) || (gradient && !e.gradient.allFinite())) {
      throw GeoplaceError("non-finite cost");
    }
  } catch (const GeoplaceError&) {
    e.ok = false;
    e.cost = kInf;
    e.gradient = RowX::Zero(theta.size());
  }
  return e;
}

UpdateResult geometry_update(const HistoryWindow& window, const GeomParam& theta_prev,
                             const Simulator& sim, const EstimatorSettings& settings) {
  const int p = theta_prev.size();
  const VecX scale = scale_of(settings, p);
  UpdateResult out;
  out.theta = theta_prev;

  GeomParam theta = theta_prev;
  CostEvaluation cur = evaluate(window, theta, sim, settings, true);
  ++out.rollouts;
  out.cost = cur.cost;
  if (!cur.ok) return out;
  out.accepted_costs.push_back(cur.cost);

  // Trust length in scaled coordinates; grows after acceptance.
  double radius = 1.0;
  for (int k = 0; k < settings.max_iterations; ++k) {
    if (cur.cost < settings.cost_tolerance) break;
    const VecX sg = scale.cwiseProduct(cur.gradient.transpose());
    const double gnorm = sg.norm();
    if (!(gnorm > 0.0)) break;
    const VecX direction = -scale.cwiseProduct(sg);  // -S^2 g
    const double slope = -sg.squaredNorm();          // g^T direction
    bool accepted = false;
    bool tiny = false;
    for (int b = 0; b <= settings.max_backtracks; ++b) {
      const double alpha = radius / gnorm;
      const VecX step = alpha * direction;
      if (step.norm() < settings.min_step) {
        tiny = true;
        break;
      }
      const GeomParam trial = theta.with_values(theta.values() + step);
      CostEvaluation next = evaluate(window, trial, sim, settings, true);
      ++out.rollouts;
      if (next.ok && next.cost <= cur.cost + settings.armijo_c * alpha * slope) {
        theta = trial;
        cur = std::move(next);
        accepted = true;
        break;
      }
      radius *= settings.shrink;
    }
    ++out.iterations;
    if (!accepted) break;
    out.accepted_costs.push_back(cur.cost);
    if (cur.cost < out.cost) {
      out.cost = cur.cost;
      out.theta = theta;
    }
    radius = std::min(2.0 * radius, 1.0);
    if (tiny) break;
  }
  return out;
}

Belief belief_update_serial(const HistoryWindow& window, const Belief& previous,
                            const Simulator& sim, const EstimatorSettings& settings) {
  Belief next = previous;
  for (auto& particle : next.particles) {
    const UpdateResult r = geometry_update(window, particle.theta, sim, settings);
    particle = {r.theta, r.cost};
  }
  return next;
}

Belief belief_update(const HistoryWindow& window, const Belief& previous, const Simulator& sim,
                     const EstimatorSettings& settings) {
  Belief next = previous;
  const int n = next.size();
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    const UpdateResult r = geometry_update(window, previous.particles[i].theta, sim, settings);
    next.particles[i] = {r.theta, r.cost};
  }
  return next;
}

Belief belief_init(const GeomParam& theta_init, int n, const VecX& noise_sigma,
                   std::uint64_t seed) {
  if (n < 1) throw GeoplaceError("belief_init: need at least one particle");
  if (noise_sigma.size() != theta_init.size() || noise_sigma.minCoeff() < 0.0) {
    throw GeoplaceError("belief_init: sigma must be nonnegative with one entry per parameter");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Belief b;
  b.particles.reserve(n);
  for (int i = 0; i < n; ++i) {
    VecX v = theta_init.values();
    for (int j = 0; j < v.size(); ++j) {
      const double e = g(rng);
      v[j] += noise_sigma[j] * e;
    }
    b.particles.push_back({theta_init.with_values(v), 0.0});
  }
  return b;
}

int select_index(const Belief& belief) {
  if (belief.particles.empty()) throw GeoplaceError("select_estimate: empty belief");
  int best = 0;
  for (int i = 1; i < belief.size(); ++i) {
    if (belief.particles[i].cost < belief.particles[best].cost) best = i;
  }
  return best;
}

GeomParam select_estimate(const Belief& belief) {
  return belief.particles[select_index(belief)].theta;
}

VecX pf_weights(const VecX& costs, double beta) {
  if (!(beta > 0.0)) throw GeoplaceError("pf_weights: beta must be positive");
  VecX w(costs.size());
  for (Eigen::Index i = 0; i < costs.size(); ++i) w[i] = std::exp(-beta * costs[i]);
  if (!(w.sum() > 0.0)) throw DegenerateWeights("pf_weights: every weight underflowed");
  return w;
}

VecX normalize_weights(const VecX& weights) {
  const double s = weights.sum();
  if (!(s > 0.0)) throw DegenerateWeights("normalize_weights: zero total weight");
  return weights / s;
}

std::vector<int> low_variance_resample(const VecX& w, int count, std::mt19937_64& rng) {
  if (count < 1 || w.size() < 1) throw GeoplaceError("low_variance_resample: empty input");
  std::uniform_real_distribution<double> u(0.0, 1.0 / count);
  const double r = u(rng);
  std::vector<int> out;
  out.reserve(count);
  double c = w[0];
  int i = 0;
  const int last = static_cast<int>(w.size()) - 1;
  for (int m = 0; m < count; ++m) {
    const double target = r + static_cast<double>(m) / count;
    while (target > c && i < last) c += w[++i];
    out.push_back(i);
  }
  return out;
}

PfResult pf_update(const HistoryWindow& window, const Belief& previous, double beta,
                   const VecX& process_sigma, std::uint64_t seed, const Simulator& sim,
                   const EstimatorSettings& settings) {
  if (previous.particles.empty()) throw GeoplaceError("pf_update: empty belief");
  const int n = previous.size();
  const int p = previous.particles.front().theta.size();
  if (process_sigma.size() != p) throw GeoplaceError("pf_update: sigma dimension mismatch");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);

  Belief predicted = previous;
  for (auto& particle : predicted.particles) {
    VecX v = particle.theta.values();
    for (int j = 0; j < p; ++j) {
      const double e = g(rng);
      v[j] += process_sigma[j] * e;
    }
    particle.theta = particle.theta.with_values(v);
  }
  VecX costs(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    costs[i] = evaluate(window, predicted.particles[i].theta, sim, settings, false).cost;
    predicted.particles[i].cost = costs[i];
  }

  PfResult out;
  out.beta_used = beta;
  VecX w;
  try {
    w = pf_weights(costs, beta);
  } catch (const DegenerateWeights&) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::isfinite(costs[i])) worst = std::max(worst, costs[i]);
    }
    if (!(worst > 0.0)) throw;
    out.beta_used = 700.0 / worst;
    w = pf_weights(costs, out.beta_used);
  }
  out.weights = normalize_weights(w);
  const auto idx = low_variance_resample(out.weights, n, rng);
  out.belief.particles.reserve(n);
  for (int i : idx) out.belief.particles.push_back(predicted.particles[i]);
  return out;
}

}  // namespace geoplace::estimation
