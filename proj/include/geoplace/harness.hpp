#pragma once

// Experiment orchestration: configuration, episodes for the three methods,
// summary statistics, gradient checks and result files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geoplace/estimation.hpp"
#include "geoplace/tasks.hpp"

namespace geoplace::harness {

inline constexpr int kSchemaVersion = 1;

class ConfigError : public GeoplaceError {
 public:
  using GeoplaceError::GeoplaceError;
};

class IoError : public GeoplaceError {
 public:
  using GeoplaceError::GeoplaceError;
};

enum class Method { kOurs, kPf, kHeuristic };

Method parse_method(const std::string& name);  // throws ConfigError
std::string method_name(Method method);

struct ExperimentConfig {
  std::string scenario = "pose";
  Method method = Method::kOurs;
  int particles = 0;  // 0 selects 10 for ours and 50 for pf
  int cases = 10;
  std::uint64_t seed = 1;
  double beta = 1.0;
  // Empty vectors select 2 mm for lengths and 2 deg for angles.
  VecX perception_sigma;
  VecX process_sigma;
  double heuristic_threshold = 2.0;  // N
  estimation::EstimatorSettings estimator;
  tasks::ScenarioSettings scenario_settings;
  std::string output_dir = "results";
  std::string format = "json";  // json, csv or both
  int workers = 1;

  int particle_count() const;
  VecX perception_sigma_for(tasks::ScenarioKind kind) const;
  VecX process_sigma_for(tasks::ScenarioKind kind) const;
  /// Throws ConfigError on out-of-range settings.
  void validate() const;
  /// Non-fatal notes, e.g. rollout budgets of ours and pf far apart.
  std::vector<std::string> warnings() const;
};

/// Parses YAML text; unknown keys and bad values raise ConfigError.
ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::filesystem::path& path);  // IoError, ConfigError

struct StepRecord {
  int t = 0;
  dynamics::RobotState state;  // x_t, before the action
  dynamics::Action action;
  Wrench measured;  // y_{t+1}
  VecX estimate;    // empty for the heuristic
  std::vector<VecX> particle_values;
  std::vector<double> particle_costs;
};

struct EpisodeRecord {
  int case_index = 0;
  std::uint64_t seed = 0;
  VecX theta_gt;
  std::vector<StepRecord> steps;
  dynamics::RobotState final_state;
  double metric = 0.0;  // deg for pose/shape, mm for env
  bool failed = false;
  std::string failure;
  std::vector<double> wall_seconds;  // per action; kept out of result files
};

struct Summary {
  int count = 0;
  double mean = 0.0;
  double half_width = 0.0;  // 95% Student-t; 0 for a single value
  double low() const { return mean - half_width; }
  double high() const { return mean + half_width; }
};

/// Mean and 95% Student-t confidence interval.
Summary summarize(const std::vector<double>& values);

/// Seed of case `index` in an experiment seeded with `seed`.
std::uint64_t episode_seed(std::uint64_t seed, int index);

EpisodeRecord run_episode(const ExperimentConfig& config, const tasks::Scenario& scenario,
                          int case_index);

/// Runs every test case; episodes run on up to `workers` threads and are
/// returned in case order.
std::vector<EpisodeRecord> run_experiment(const ExperimentConfig& config);

/// The sliding window ending at x_t over the last min(t, H) steps.
estimation::HistoryWindow make_window(const std::vector<dynamics::RobotState>& states,
                                      const std::vector<dynamics::Action>& actions,
                                      const std::vector<Wrench>& measured, int t, int H);

struct GradcheckSample {
  int case_index = 0;
  int t = 0;
  int contacts = 0;
  bool mode_stable = true;
  double wrench_error = 0.0;
  double residual_error = 0.0;
};

struct GradcheckReport {
  std::string scenario;
  double step = 0.0;
  double tolerance = 1e-3;
  std::vector<GradcheckSample> samples;
  int rejected = 0;  // configurations skipped for unstable contact modes
  double max_error() const;
  bool passed() const;
};

/// Relative error max|a - n| / max(max|n|, floor).
double relative_error(const MatX& analytic, const MatX& numeric, double floor = 1e-9);

/// Samples resting-contact windows (contact force in every step, no impact
/// inside the window, same contact modes under the perturbations) from
/// oracle closed-loop runs and compares analytic wrench and residual
/// gradients to central differences.
GradcheckReport gradcheck(const std::string& scenario, int samples, double step,
                          std::uint64_t seed, const tasks::ScenarioSettings& settings = {});

/// Writes results.json and/or summary.csv plus traces.csv, and timing.csv.
void emit_results(const ExperimentConfig& config, const std::vector<EpisodeRecord>& records,
                  const std::filesystem::path& dir, const std::string& format);

/// Reads records written to results.json back, with the config they embed.
std::pair<ExperimentConfig, std::vector<EpisodeRecord>> read_results(
    const std::filesystem::path& json_path);

std::string gradcheck_json(const GradcheckReport& report);

}  // namespace geoplace::harness
