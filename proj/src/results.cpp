#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "geoplace/harness.hpp"

namespace geoplace::harness {
namespace {

using nlohmann::json;

constexpr double kDeg = 3.14159265358979323846 / 180.0;

json vec(const VecX& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json quat(const Quat& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

VecX to_vec(const json& a) {
  VecX v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] =
        a[i].is_null() ? std::numeric_limits<double>::infinity() : a[i].get<double>();
  }
  return v;
}

Pose to_pose(const json& position, const json& orientation) {
  Pose p;
  p.position = to_vec(position);
  p.orientation = Quat(orientation[0].get<double>(), orientation[1].get<double>(),
                       orientation[2].get<double>(), orientation[3].get<double>());
  return p;
}

json config_json(const ExperimentConfig& c) {
  const auto& s = c.scenario_settings;
  const auto& e = c.estimator;
  json j;
  j["scenario"] = c.scenario;
  j["method"] = method_name(c.method);
  j["particles"] = c.particles;
  j["cases"] = c.cases;
  j["seed"] = c.seed;
  j["beta"] = c.beta;
  if (c.perception_sigma.size()) j["perception_sigma"] = vec(c.perception_sigma);
  if (c.process_sigma.size()) j["process_sigma"] = vec(c.process_sigma);
  j["heuristic_threshold"] = c.heuristic_threshold;
  j["estimator"] = {{"max_iterations", e.max_iterations},
                    {"armijo_c", e.armijo_c},
                    {"shrink", e.shrink},
                    {"max_backtracks", e.max_backtracks},
                    {"min_step", e.min_step},
                    {"cost_tolerance", e.cost_tolerance},
                    {"characteristic_length", e.characteristic_length},
                    {"rollout_penetration_tolerance", e.rollout_penetration_tolerance}};
  j["scenario_settings"] = {{"cube_side", s.cube_side},
                            {"pillar_side", s.pillar_side},
                            {"pillar_height", s.pillar_height},
                            {"start_height", s.start_height},
                            {"translation_cap", s.translation_cap},
                            {"rotation_cap_deg", s.rotation_cap / kDeg},
                            {"goal_length", s.goal_length},
                            {"T", s.T},
                            {"H", s.H},
                            {"sensor_sigma", vec(VecX(s.sensor_sigma))},
                            {"mass", s.mass},
                            {"rot_inertia", s.rot_inertia},
                            {"lin_stiffness", s.lin_stiffness},
                            {"rot_stiffness", s.rot_stiffness},
                            {"damping_ratio", s.damping_ratio},
                            {"dt", s.dt},
                            {"friction", s.friction}};
  return j;
}

std::string metric_name(const std::string& scenario) {
  return scenario == "env" ? "distance_mm" : "angle_deg";
}

std::vector<double> metrics(const std::vector<EpisodeRecord>& records) {
  std::vector<double> m;
  for (const auto& r : records) m.push_back(r.metric);
  return m;
}

json episode_json(const EpisodeRecord& r) {
  json e;
  e["case_index"] = r.case_index;
  e["seed"] = r.seed;
  e["theta_gt"] = vec(r.theta_gt);
  e["metric"] = r.metric;
  e["failed"] = r.failed;
  e["failure"] = r.failure;
  e["final_position"] = vec(r.final_state.pose.position);
  e["final_orientation"] = quat(r.final_state.pose.orientation);
  e["final_twist"] = vec(VecX(r.final_state.twist));
  json steps = json::array();
  for (const auto& s : r.steps) {
    json k;
    k["t"] = s.t;
    k["position"] = vec(s.state.pose.position);
    k["orientation"] = quat(s.state.pose.orientation);
    k["twist"] = vec(VecX(s.state.twist));
    k["action_position"] = vec(s.action.reference.position);
    k["action_orientation"] = quat(s.action.reference.orientation);
    k["measured"] = vec(VecX(s.measured.stacked()));
    k["estimate"] = vec(s.estimate);
    json pv = json::array();
    for (const auto& v : s.particle_values) pv.push_back(vec(v));
    k["particle_values"] = pv;
    json pc = json::array();
    for (double c : s.particle_costs) pc.push_back(std::isfinite(c) ? json(c) : json(nullptr));
    k["particle_costs"] = pc;
    steps.push_back(std::move(k));
  }
  e["steps"] = std::move(steps);
  return e;
}

EpisodeRecord episode_from(const json& e) {
  EpisodeRecord r;
  r.case_index = e.at("case_index").get<int>();
  r.seed = e.at("seed").get<std::uint64_t>();
  r.theta_gt = to_vec(e.at("theta_gt"));
  r.metric = e.at("metric").get<double>();
  r.failed = e.at("failed").get<bool>();
  r.failure = e.at("failure").get<std::string>();
  r.final_state.pose = to_pose(e.at("final_position"), e.at("final_orientation"));
  r.final_state.twist = to_vec(e.at("final_twist"));
  for (const auto& k : e.at("steps")) {
    StepRecord s;
    s.t = k.at("t").get<int>();
    s.state.pose = to_pose(k.at("position"), k.at("orientation"));
    s.state.twist = to_vec(k.at("twist"));
    s.action.reference = to_pose(k.at("action_position"), k.at("action_orientation"));
    s.measured = Wrench::from_stacked(to_vec(k.at("measured")));
    s.estimate = to_vec(k.at("estimate"));
    for (const auto& v : k.at("particle_values")) s.particle_values.push_back(to_vec(v));
    for (const auto& c : k.at("particle_costs")) {
      s.particle_costs.push_back(c.is_null() ? std::numeric_limits<double>::infinity()
                                             : c.get<double>());
    }
    r.steps.push_back(std::move(s));
  }
  return r;
}

std::ofstream open(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

void csv_values(std::ostream& out, const VecX& v, int width) {
  for (int i = 0; i < width; ++i) {
    out << ',';
    if (i < v.size()) out << v[i];
  }
}

}  // namespace

void emit_results(const ExperimentConfig& config, const std::vector<EpisodeRecord>& records,
                  const std::filesystem::path& dir, const std::string& format) {
  if (records.empty()) throw GeoplaceError("emit_results: no records");
  if (format != "json" && format != "csv" && format != "both") {
    throw ConfigError("format must be json, csv or both");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const Summary sum = summarize(metrics(records));
  const auto names = tasks::parameter_names(tasks::parse_scenario(config.scenario));
  const int p = static_cast<int>(names.size());

  if (format == "json" || format == "both") {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = config_json(config);
    j["parameter_names"] = names;
    j["summary"] = {{"metric", metric_name(config.scenario)},
                    {"count", sum.count},
                    {"mean", sum.mean},
                    {"ci95_low", sum.low()},
                    {"ci95_high", sum.high()}};
    json eps = json::array();
    for (const auto& r : records) eps.push_back(episode_json(r));
    j["episodes"] = std::move(eps);
    auto out = open(dir / "results.json");
    out << j.dump(1) << '\n';
    if (!out) throw IoError("failed writing results.json");
  }
  if (format == "csv" || format == "both") {
    {
      auto out = open(dir / "summary.csv");
      out << "schema_version,scenario,method,seed,metric,count,mean,ci95_low,ci95_high\n";
      out << kSchemaVersion << ',' << config.scenario << ',' << method_name(config.method) << ','
          << config.seed << ',' << metric_name(config.scenario) << ',' << sum.count << ','
          << sum.mean << ',' << sum.low() << ',' << sum.high() << '\n';
      for (const auto& r : records) {
        // per-episode rows follow the aggregate row
        out << kSchemaVersion << ',' << config.scenario << ',' << method_name(config.method)
            << ',' << r.seed << ',' << metric_name(config.scenario) << ",1," << r.metric << ','
            << r.metric << ',' << r.metric << '\n';
      }
    }
    auto out = open(dir / "traces.csv");
    out << "case,t,x,y,z,qw,qx,qy,qz,tau_x,tau_y,tau_z,f_x,f_y,f_z";
    for (const auto& n : names) out << ",theta_hat_" << n;
    out << '\n';
    for (const auto& r : records) {
      for (const auto& s : r.steps) {
        const auto& pose = s.state.pose;
        out << r.case_index << ',' << s.t << ',' << pose.position.x() << ','
            << pose.position.y() << ',' << pose.position.z() << ',' << pose.orientation.w()
            << ',' << pose.orientation.x() << ',' << pose.orientation.y() << ','
            << pose.orientation.z();
        const Vec6 y = s.measured.stacked();
        for (int i = 0; i < 6; ++i) out << ',' << y[i];
        csv_values(out, s.estimate, p);
        out << '\n';
      }
    }
    if (!out) throw IoError("failed writing traces.csv");
  }
  auto timing = open(dir / "timing.csv");
  timing << "case,t,wall_seconds\n";
  for (const auto& r : records) {
    for (std::size_t t = 0; t < r.wall_seconds.size(); ++t) {
      timing << r.case_index << ',' << t << ',' << r.wall_seconds[t] << '\n';
    }
  }
}

std::pair<ExperimentConfig, std::vector<EpisodeRecord>> read_results(
    const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("cannot read " + json_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed results file: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw IoError("unsupported schema version");
    }
    // JSON is valid YAML, so the embedded config goes through the same parser.
    ExperimentConfig config = parse_config(j.at("config").dump());
    std::vector<EpisodeRecord> records;
    for (const auto& e : j.at("episodes")) records.push_back(episode_from(e));
    return {config, records};
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed results file: ") + e.what());
  }
}

std::string gradcheck_json(const GradcheckReport& report) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["scenario"] = report.scenario;
  j["step"] = report.step;
  j["tolerance"] = report.tolerance;
  j["max_relative_error"] = report.max_error();
  j["passed"] = report.passed();
  j["rejected_unstable"] = report.rejected;
  json samples = json::array();
  for (const auto& s : report.samples) {
    samples.push_back({{"case", s.case_index},
                       {"t", s.t},
                       {"contacts", s.contacts},
                       {"mode_stable", s.mode_stable},
                       {"wrench_error", s.wrench_error},
                       {"residual_error", s.residual_error}});
  }
  j["samples"] = std::move(samples);
  return j.dump(1);
}

}  // namespace geoplace::harness
