#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "geoplace/harness.hpp"

namespace geoplace::harness {
namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

void check_keys(const YAML::Node& node, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!node.IsMap()) throw ConfigError(where + ": expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (!node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

VecX read_vector(const YAML::Node& node, const char* key) {
  if (!node[key]) return {};
  std::vector<double> v;
  try {
    v = node[key].as<std::vector<double>>();
  } catch (const YAML::Exception&) {
    throw ConfigError(std::string("'") + key + "' must be a list of numbers");
  }
  return Eigen::Map<VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
}

VecX default_sigma(tasks::ScenarioKind kind) {
  switch (kind) {
    case tasks::ScenarioKind::kPose: return (VecX(2) << 0.002, 2.0 * kDeg).finished();
    case tasks::ScenarioKind::kShape: return VecX::Constant(2, 0.002);
    case tasks::ScenarioKind::kEnv: return VecX::Constant(3, 0.002);
  }
  return {};
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "ours") return Method::kOurs;
  if (name == "pf") return Method::kPf;
  if (name == "heuristic") return Method::kHeuristic;
  throw ConfigError("unknown method '" + name + "' (expected ours, pf or heuristic)");
}

std::string method_name(Method method) {
  switch (method) {
    case Method::kOurs: return "ours";
    case Method::kPf: return "pf";
    case Method::kHeuristic: return "heuristic";
  }
  return "";
}

int ExperimentConfig::particle_count() const {
  if (particles > 0) return particles;
  return method == Method::kPf ? 50 : 10;
}

VecX ExperimentConfig::perception_sigma_for(tasks::ScenarioKind kind) const {
  return perception_sigma.size() ? perception_sigma : default_sigma(kind);
}

VecX ExperimentConfig::process_sigma_for(tasks::ScenarioKind kind) const {
  return process_sigma.size() ? process_sigma : default_sigma(kind);
}

void ExperimentConfig::validate() const {
  tasks::ScenarioKind kind;
  try {
    kind = tasks::parse_scenario(scenario);
    scenario_settings.validate();
  } catch (const GeoplaceError& e) {
    throw ConfigError(e.what());
  }
  const auto p = static_cast<Eigen::Index>(tasks::parameter_names(kind).size());
  if (particles < 0) throw ConfigError("particles must be >= 0");
  if (cases < 1) throw ConfigError("cases must be >= 1");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
  if (!(heuristic_threshold > 0.0)) throw ConfigError("heuristic_threshold must be positive");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  for (const VecX* v : {&perception_sigma, &process_sigma}) {
    if (v->size() && (v->size() != p || v->minCoeff() < 0.0)) {
      throw ConfigError("noise sigmas need one nonnegative entry per parameter");
    }
  }
  const auto& e = estimator;
  if (e.max_iterations < 0 || e.max_backtracks < 0) throw ConfigError("iteration limits must be >= 0");
  if (!(e.armijo_c > 0.0 && e.armijo_c < 1.0)) throw ConfigError("armijo_c must be in (0, 1)");
  if (!(e.shrink > 0.0 && e.shrink < 1.0)) throw ConfigError("shrink must be in (0, 1)");
  if (!(e.characteristic_length > 0.0)) throw ConfigError("characteristic_length must be positive");
  if (!(e.cost_tolerance >= 0.0) || !(e.min_step >= 0.0)) throw ConfigError("tolerances must be >= 0");
  if (!(e.rollout_penetration_tolerance > 0.0)) {
    throw ConfigError("rollout_penetration_tolerance must be positive");
  }
  if (format != "json" && format != "csv" && format != "both") {
    throw ConfigError("format must be json, csv or both");
  }
  if (output_dir.empty()) throw ConfigError("output dir must not be empty");
}

std::vector<std::string> ExperimentConfig::warnings() const {
  std::vector<std::string> out;
  const int k = std::max(estimator.max_iterations, 1);
  const double ours = static_cast<double>(method == Method::kOurs ? particle_count() : 10) * k;
  const double pf = method == Method::kPf ? particle_count() : 50;
  if (method != Method::kHeuristic && (ours > 10.0 * pf || pf > 10.0 * ours)) {
    std::ostringstream s;
    s << "rollout budgets differ by more than 10x (ours N*K_max = " << ours << ", pf N = " << pf
      << ")";
    out.push_back(s.str());
  }
  return out;
}

ExperimentConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  ExperimentConfig c;
  if (root.IsNull()) {
    c.validate();
    return c;
  }
  check_keys(root,
             {"scenario", "method", "particles", "cases", "seed", "beta", "perception_sigma",
              "process_sigma", "heuristic_threshold", "workers", "output", "estimator",
              "scenario_settings"},
             "config");
  read(root, "scenario", c.scenario);
  if (root["method"]) {
    std::string m;
    read(root, "method", m);
    c.method = parse_method(m);
  }
  read(root, "particles", c.particles);
  read(root, "cases", c.cases);
  read(root, "seed", c.seed);
  read(root, "beta", c.beta);
  c.perception_sigma = read_vector(root, "perception_sigma");
  c.process_sigma = read_vector(root, "process_sigma");
  read(root, "heuristic_threshold", c.heuristic_threshold);
  read(root, "workers", c.workers);

  if (const auto out = root["output"]) {
    check_keys(out, {"dir", "format"}, "output");
    read(out, "dir", c.output_dir);
    read(out, "format", c.format);
  }
  if (const auto e = root["estimator"]) {
    check_keys(e,
               {"max_iterations", "armijo_c", "shrink", "max_backtracks", "min_step",
                "cost_tolerance", "characteristic_length", "rollout_penetration_tolerance"},
               "estimator");
    auto& s = c.estimator;
    read(e, "max_iterations", s.max_iterations);
    read(e, "armijo_c", s.armijo_c);
    read(e, "shrink", s.shrink);
    read(e, "max_backtracks", s.max_backtracks);
    read(e, "min_step", s.min_step);
    read(e, "cost_tolerance", s.cost_tolerance);
    read(e, "characteristic_length", s.characteristic_length);
    read(e, "rollout_penetration_tolerance", s.rollout_penetration_tolerance);
  }
  if (const auto n = root["scenario_settings"]) {
    check_keys(n,
               {"cube_side", "pillar_side", "pillar_height", "start_height", "translation_cap",
                "rotation_cap_deg", "goal_length", "T", "H", "sensor_sigma", "mass",
                "rot_inertia", "lin_stiffness", "rot_stiffness", "damping_ratio", "dt",
                "friction"},
               "scenario_settings");
    auto& s = c.scenario_settings;
    read(n, "cube_side", s.cube_side);
    read(n, "pillar_side", s.pillar_side);
    read(n, "pillar_height", s.pillar_height);
    read(n, "start_height", s.start_height);
    read(n, "translation_cap", s.translation_cap);
    if (n["rotation_cap_deg"]) {
      double deg = 0.0;
      read(n, "rotation_cap_deg", deg);
      s.rotation_cap = deg * kDeg;
    }
    read(n, "goal_length", s.goal_length);
    read(n, "T", s.T);
    read(n, "H", s.H);
    const VecX sigma = read_vector(n, "sensor_sigma");
    if (sigma.size()) {
      if (sigma.size() != 6) throw ConfigError("sensor_sigma needs 6 entries (torque, force)");
      s.sensor_sigma = sigma;
    }
    read(n, "mass", s.mass);
    read(n, "rot_inertia", s.rot_inertia);
    read(n, "lin_stiffness", s.lin_stiffness);
    read(n, "rot_stiffness", s.rot_stiffness);
    read(n, "damping_ratio", s.damping_ratio);
    read(n, "dt", s.dt);
    read(n, "friction", s.friction);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace geoplace::harness
