#pragma once

// Wrench-residual geometry estimation: open-loop rollouts over a history
// window, gradient descent on the residual, a belief over several
// initializations, and a particle-filter baseline.

#include <cstdint>
#include <random>
#include <vector>

#include "geoplace/dynamics.hpp"
#include "geoplace/geometry.hpp"
#include "geoplace/types.hpp"

namespace geoplace::estimation {

/// States x_{t-H..t}, actions u_{t-H..t-1} and measurements y_{t-H+1..t}.
struct HistoryWindow {
  int start_step = 0;
  std::vector<dynamics::RobotState> states;
  std::vector<dynamics::Action> actions;
  std::vector<Wrench> measured;

  int length() const { return static_cast<int>(actions.size()); }
  /// Throws GeoplaceError unless H >= 1 and the three lengths agree.
  void validate() const;
};

/// The model a hypothesis is evaluated against.
struct Simulator {
  geometry::ShapeModel shapes;
  dynamics::BodyModel model;
};

struct EstimatorSettings {
  double characteristic_length = 0.1;  // m; torques are divided by it
  int max_iterations = 20;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 20;
  double min_step = 1e-7;
  double cost_tolerance = 1e-10;
  // Per-parameter scale of the descent coordinates; empty means unit scale.
  VecX scale;
  // Hypotheses may place the recorded start state inside the environment;
  // rollouts accept this much penetration before failing.
  double rollout_penetration_tolerance = 0.02;
};

/// Re-simulates the window from its first state under `theta`.
std::vector<dynamics::WrenchWithSensitivity> rollout(const HistoryWindow& window,
                                                     const GeomParam& theta,
                                                     const Simulator& sim,
                                                     bool sensitivities = true,
                                                     const EstimatorSettings& settings = {});

/// sum_k |W (y_gt_k - y_k)|^2 with W = diag(1/L, 1/L, 1/L, 1, 1, 1).
double residual(const std::vector<Wrench>& measured, const std::vector<Wrench>& predicted,
                double characteristic_length = 0.1);

/// d residual / d theta from the rollout sensitivities.
RowX residual_gradient(const std::vector<Wrench>& measured,
                       const std::vector<dynamics::WrenchWithSensitivity>& predicted,
                       double characteristic_length = 0.1);

struct CostEvaluation {
  double cost = 0.0;  // +infinity when the rollout failed
  RowX gradient;
  bool ok = true;
};

CostEvaluation evaluate(const HistoryWindow& window, const GeomParam& theta,
                        const Simulator& sim, const EstimatorSettings& settings,
                        bool gradient);

struct UpdateResult {
  GeomParam theta;
  double cost = 0.0;
  int iterations = 0;
  int rollouts = 0;
  std::vector<double> accepted_costs;  // cost of every accepted iterate
};

/// Backtracking gradient descent on the window residual starting at
/// `theta_prev`; returns the lowest-cost iterate seen.
UpdateResult geometry_update(const HistoryWindow& window, const GeomParam& theta_prev,
                             const Simulator& sim, const EstimatorSettings& settings = {});

struct Particle {
  GeomParam theta;
  double cost = 0.0;
};

struct Belief {
  std::vector<Particle> particles;
  int size() const { return static_cast<int>(particles.size()); }
};

/// Runs geometry_update on every particle; particles are processed in
/// parallel and stored by index.
Belief belief_update(const HistoryWindow& window, const Belief& previous, const Simulator& sim,
                     const EstimatorSettings& settings = {});

/// Single-threaded reference for belief_update.
Belief belief_update_serial(const HistoryWindow& window, const Belief& previous,
                            const Simulator& sim, const EstimatorSettings& settings = {});

/// theta_init plus zero-mean Gaussian noise per component; costs are 0.
Belief belief_init(const GeomParam& theta_init, int n, const VecX& noise_sigma,
                   std::uint64_t seed);

/// Index of the minimum-cost particle; the lowest index wins ties.
int select_index(const Belief& belief);
GeomParam select_estimate(const Belief& belief);

class DegenerateWeights : public GeoplaceError {
 public:
  using GeoplaceError::GeoplaceError;
};

/// exp(-beta c_i); throws DegenerateWeights when every weight underflows.
VecX pf_weights(const VecX& costs, double beta);

/// Weights divided by their sum.
VecX normalize_weights(const VecX& weights);

/// Low-variance (systematic) resampling of `count` indices.
std::vector<int> low_variance_resample(const VecX& normalized_weights, int count,
                                       std::mt19937_64& rng);

struct PfResult {
  Belief belief;
  VecX weights;           // normalized, before resampling
  double beta_used = 0.0;
};

/// Prediction noise, rollout costs, exp(-beta c) weights and low-variance
/// resampling. When every weight underflows beta is rescaled to
/// 700 / max finite cost; DegenerateWeights is thrown if no cost is finite.
PfResult pf_update(const HistoryWindow& window, const Belief& previous, double beta,
                   const VecX& process_sigma, std::uint64_t seed, const Simulator& sim,
                   const EstimatorSettings& settings = {});

}  // namespace geoplace::estimation
