#include "geoplace/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geoplace/so3.hpp"

namespace geoplace::tasks {
namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

std::array<Vec3, 8> cube_corners(double side) {
  std::array<Vec3, 8> c;
  const double h = 0.5 * side;
  int k = 0;
  for (int sz : {-1, 1}) {
    for (int sy : {-1, 1}) {
      for (int sx : {-1, 1}) c[k++] = Vec3(sx * h, sy * h, sz * h);
    }
  }
  return c;
}

geometry::HalfSpace table(int p) {
  geometry::HalfSpace t;
  t.dpoint = Mat3X::Zero(3, p);
  return t;
}

// theta = (z, psi): the cube sits at (0, 0, z) in the hand, rotated by psi
// about the hand x axis.
geometry::ShapeModel pose_shapes(double side) {
  return {"pose", [side](const GeomParam& theta) {
            geometry::ShapeSet s;
            s.num_params = 2;
            const double z = theta[0];
            const double psi = theta[1];
            const Mat3 R = Eigen::AngleAxisd(psi, Vec3::UnitX()).toRotationMatrix();
            Mat3 dR;
            dR << 0, 0, 0, 0, -std::sin(psi), -std::cos(psi), 0, std::cos(psi), -std::sin(psi);
            for (const Vec3& c : cube_corners(side)) {
              geometry::BodyVertex v;
              v.local = Vec3(0, 0, z) + R * c;
              v.dlocal.resize(3, 2);
              v.dlocal.col(0) = Vec3::UnitZ();
              v.dlocal.col(1) = dR * c;
              s.body_vertices.push_back(v);
            }
            s.planes.push_back(table(2));
            return s;
          }};
}

// theta = (d1, d2): the left (x < 0) and right (x > 0) walls of the cube
// reach d1 and d2 below the nominal bottom.
geometry::ShapeModel shape_shapes(double side) {
  return {"shape", [side](const GeomParam& theta) {
            geometry::ShapeSet s;
            s.num_params = 2;
            for (const Vec3& c : cube_corners(side)) {
              geometry::BodyVertex v;
              v.local = c;
              v.dlocal = Mat3X::Zero(3, 2);
              if (c.z() < 0.0) {
                const int wall = c.x() < 0.0 ? 0 : 1;
                v.local.z() -= theta[wall];
                v.dlocal(2, wall) = -1.0;
              }
              s.body_vertices.push_back(v);
            }
            s.planes.push_back(table(2));
            return s;
          }};
}

// theta = (l1, l2, h): pillar top center at (l1, l2, height + h).
geometry::ShapeModel env_shapes(double side, double pillar_side, double height) {
  return {"env", [=](const GeomParam& theta) {
            geometry::ShapeSet s;
            s.num_params = 3;
            for (const Vec3& c : cube_corners(side)) {
              s.body_vertices.push_back({c, Mat3X::Zero(3, 3)});
            }
            geometry::BodyFace face;
            face.center = Vec3(0, 0, -0.5 * side);
            face.dcenter = Mat3X::Zero(3, 3);
            face.half_u = face.half_v = 0.5 * side;
            s.body_bottom = face;
            s.planes.push_back(table(3));
            geometry::Pillar pillar;
            pillar.top_center = Vec3(theta[0], theta[1], height + theta[2]);
            pillar.dtop_center = Mat3X::Identity(3, 3);
            pillar.half_side = 0.5 * pillar_side;
            s.pillars.push_back(pillar);
            return s;
          }};
}

void check_dimension(ScenarioKind kind, const GeomParam& theta) {
  if (theta.size() != static_cast<int>(parameter_names(kind).size())) {
    throw GeoplaceError("scenario '" + scenario_name(kind) + "' expects " +
                        std::to_string(parameter_names(kind).size()) + " parameters");
  }
}

}  // namespace

ScenarioKind parse_scenario(const std::string& name) {
  if (name == "pose") return ScenarioKind::kPose;
  if (name == "shape") return ScenarioKind::kShape;
  if (name == "env") return ScenarioKind::kEnv;
  throw UnknownScenario("unknown scenario '" + name + "'");
}

std::string scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kPose: return "pose";
    case ScenarioKind::kShape: return "shape";
    case ScenarioKind::kEnv: return "env";
  }
  return "?";
}

std::vector<std::string> parameter_names(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kPose: return {"z", "psi"};
    case ScenarioKind::kShape: return {"d1", "d2"};
    case ScenarioKind::kEnv: return {"l1", "l2", "h"};
  }
  return {};
}

void ScenarioSettings::validate() const {
  const auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw GeoplaceError(std::string("scenario setting '") + what + "' must be positive");
    }
  };
  positive(cube_side, "cube_side");
  positive(pillar_side, "pillar_side");
  positive(pillar_height, "pillar_height");
  positive(start_height, "start_height");
  positive(translation_cap, "translation_cap");
  positive(rotation_cap, "rotation_cap");
  positive(goal_length, "goal_length");
  positive(mass, "mass");
  positive(rot_inertia, "rot_inertia");
  positive(lin_stiffness, "lin_stiffness");
  positive(rot_stiffness, "rot_stiffness");
  positive(damping_ratio, "damping_ratio");
  positive(dt, "dt");
  if (T < 1 || H < 1 || H >= T) throw GeoplaceError("scenario settings need 1 <= H < T");
  if (sensor_sigma.minCoeff() < 0.0) throw GeoplaceError("sensor sigma must be >= 0");
  if (friction < 0.0) throw GeoplaceError("friction must be >= 0");
}

Vec3 Scenario::bottom_normal(const GeomParam& theta) const {
  switch (kind) {
    case ScenarioKind::kPose:
      return Eigen::AngleAxisd(theta[1], Vec3::UnitX()) * Vec3(0, 0, -1);
    case ScenarioKind::kShape:
      return Vec3(theta[0] - theta[1], 0.0, -settings.cube_side).normalized();
    case ScenarioKind::kEnv:
      return Vec3(0, 0, -1);
  }
  return Vec3(0, 0, -1);
}

Pose Scenario::closest_goal(const GeomParam& theta, const Pose& current) const {
  Pose goal;
  if (kind == ScenarioKind::kEnv) {
    goal.position = Vec3(theta[0], theta[1],
                         settings.pillar_height + theta[2] + 0.5 * settings.cube_side);
    return goal;
  }
  // Smallest rotation of the current orientation that levels the bottom face,
  // then the height at which the lowest vertex touches the table.
  const Vec3 n = current.orientation * bottom_normal(theta);
  goal.orientation = (so3::align(n, Vec3(0, 0, -1)) * current.orientation).normalized();
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& v : shapes(theta).body_vertices) {
    lowest = std::min(lowest, (goal.orientation * v.local).z());
  }
  goal.position = Vec3(current.position.x(), current.position.y(), -lowest);
  return goal;
}

Scenario make_scenario(ScenarioKind kind, const GeomParam& theta_gt, std::uint64_t seed,
                       const ScenarioSettings& settings) {
  settings.validate();
  check_dimension(kind, theta_gt);
  Scenario s;
  s.kind = kind;
  s.name = scenario_name(kind);
  s.theta_names = parameter_names(kind);
  s.theta_gt = GeomParam(theta_gt.values(), s.theta_names);
  s.theta_init = GeomParam::zeros(s.theta_names);
  s.settings = settings;
  s.seed = seed;
  s.T = settings.T;
  s.H = settings.H;
  s.sensor_sigma = settings.sensor_sigma;
  switch (kind) {
    case ScenarioKind::kPose: s.shapes = pose_shapes(settings.cube_side); break;
    case ScenarioKind::kShape: s.shapes = shape_shapes(settings.cube_side); break;
    case ScenarioKind::kEnv:
      s.shapes = env_shapes(settings.cube_side, settings.pillar_side, settings.pillar_height);
      break;
  }
  s.model = dynamics::make_body_model(settings.mass, settings.rot_inertia,
                                      settings.rot_stiffness, settings.lin_stiffness,
                                      settings.damping_ratio, settings.dt);
  s.model.friction = settings.friction;
  s.initial.pose = s.closest_goal(s.theta_init, Pose{});
  s.initial.pose.position.z() += settings.start_height;
  return s;
}

Scenario make_scenario(const std::string& name, const GeomParam& theta_gt, std::uint64_t seed,
                       const ScenarioSettings& settings) {
  return make_scenario(parse_scenario(name), theta_gt, seed, settings);
}

std::vector<GeomParam> test_cases(ScenarioKind kind, int count, std::uint64_t seed) {
  std::vector<double> half;
  switch (kind) {
    case ScenarioKind::kPose: half = {0.003, 5.0 * kDeg}; break;
    case ScenarioKind::kShape: half = {0.003, 0.003}; break;
    case ScenarioKind::kEnv: half = {0.004, 0.004, 0.003}; break;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<GeomParam> out;
  for (int i = 0; i < count; ++i) {
    VecX v(half.size());
    for (std::size_t j = 0; j < half.size(); ++j) v[j] = half[j] * u(rng);
    out.emplace_back(v, parameter_names(kind));
  }
  return out;
}

dynamics::Action policy(const dynamics::RobotState& state, const GeomParam& theta,
                        const Scenario& scenario) {
  const Pose& cur = state.pose;
  const Pose goal = scenario.closest_goal(theta, cur);
  const Vec3 dp = goal.position - cur.position;
  const Vec3 dr = so3::log(goal.orientation * cur.orientation.conjugate());
  const double tcap = scenario.settings.translation_cap;
  const double rcap = scenario.settings.rotation_cap;
  if (dp.norm() <= tcap && dr.norm() <= rcap) return {goal};
  dynamics::Action a;
  a.reference.position = cur.position + (dp.norm() > tcap ? Vec3(dp * (tcap / dp.norm())) : dp);
  const Vec3 step = dr.norm() > rcap ? Vec3(dr * (rcap / dr.norm())) : dr;
  a.reference.orientation = (so3::exp(step) * cur.orientation).normalized();
  return a;
}

HeuristicDecision heuristic_policy(const dynamics::RobotState& state, const Wrench& measured,
                                   double threshold, double translation_cap) {
  HeuristicDecision d;
  d.action.reference = state.pose;
  if (measured.force.norm() > threshold) {
    d.release = true;
    return d;
  }
  d.action.reference.position.z() -= translation_cap;
  return d;
}

Wrench ft_sensor(const Wrench& true_wrench, const Vec6& sigma, std::mt19937_64& rng) {
  if (sigma.minCoeff() < 0.0) throw GeoplaceError("ft_sensor: sigma must be >= 0");
  std::normal_distribution<double> g(0.0, 1.0);
  Vec6 w = true_wrench.stacked();
  for (int i = 0; i < 6; ++i) {
    const double e = g(rng);
    w[i] += sigma[i] * e;
  }
  Wrench out = Wrench::from_stacked(w);
  out.frame = true_wrench.frame;
  return out;
}

Wrench ft_sensor(const Wrench& true_wrench, const Vec6& sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ft_sensor(true_wrench, sigma, rng);
}

double angle_error(const dynamics::RobotState& final_state, const GeomParam& theta_gt,
                   const Scenario& scenario) {
  if (scenario.kind == ScenarioKind::kEnv) {
    throw WrongScenario("angle_error applies to pose and shape only");
  }
  const Vec3 n = final_state.pose.orientation * scenario.bottom_normal(theta_gt);
  const double c = std::clamp(-n.z(), -1.0, 1.0);
  return std::acos(c) / kDeg;
}

double distance_error(const dynamics::RobotState& final_state, const GeomParam& theta_gt,
                      const Scenario& scenario) {
  if (scenario.kind != ScenarioKind::kEnv) {
    throw WrongScenario("distance_error applies to env only");
  }
  const Vec3 center = final_state.pose.transform(Vec3(0, 0, -0.5 * scenario.settings.cube_side));
  return 1000.0 * std::hypot(center.x() - theta_gt[0], center.y() - theta_gt[1]);
}

double placement_error(const dynamics::RobotState& final_state, const GeomParam& theta_gt,
                       const Scenario& scenario) {
  return scenario.kind == ScenarioKind::kEnv ? distance_error(final_state, theta_gt, scenario)
                                             : angle_error(final_state, theta_gt, scenario);
}

}  // namespace geoplace::tasks
