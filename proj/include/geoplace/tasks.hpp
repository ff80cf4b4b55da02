#pragma once

// Placement scenarios, goal sets, policies, the virtual force-torque sensor
// and the release metrics.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "geoplace/dynamics.hpp"
#include "geoplace/geometry.hpp"
#include "geoplace/types.hpp"

namespace geoplace::tasks {

enum class ScenarioKind { kPose, kShape, kEnv };

class UnknownScenario : public GeoplaceError {
 public:
  using GeoplaceError::GeoplaceError;
};

class WrongScenario : public GeoplaceError {
 public:
  using GeoplaceError::GeoplaceError;
};

/// Throws UnknownScenario for anything but "pose", "shape" or "env".
ScenarioKind parse_scenario(const std::string& name);
std::string scenario_name(ScenarioKind kind);
std::vector<std::string> parameter_names(ScenarioKind kind);

struct ScenarioSettings {
  double cube_side = 0.05;        // m
  double pillar_side = 0.015;     // m
  double pillar_height = 0.05;    // nominal top height, m
  double start_height = 0.10;     // above the nominal goal, m
  double translation_cap = 0.005; // per action, m
  double rotation_cap = 2.0 * 3.14159265358979323846 / 180.0;  // rad
  double goal_length = 0.1;       // closest-goal metric weight on angle, m
  int T = 50;
  int H = 5;
  Vec6 sensor_sigma = (Vec6() << 0.01, 0.01, 0.01, 0.1, 0.1, 0.1).finished();

  double mass = 1.0;
  double rot_inertia = 0.02;
  double lin_stiffness = 1000.0;
  double rot_stiffness = 30.0;
  double damping_ratio = 0.7;
  double dt = 0.01;
  double friction = 0.0;

  /// Throws GeoplaceError when any value is out of range.
  void validate() const;
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::kPose;
  std::string name;
  geometry::ShapeModel shapes;
  std::vector<std::string> theta_names;
  GeomParam theta_gt;
  GeomParam theta_init;
  dynamics::BodyModel model;
  dynamics::RobotState initial;
  Vec6 sensor_sigma = Vec6::Zero();
  int T = 50;
  int H = 5;
  std::uint64_t seed = 0;
  ScenarioSettings settings;

  /// Closest pose of G(theta) to `current`: rotation angle first, then
  /// translation. Pose and shape goals keep the current horizontal position.
  Pose closest_goal(const GeomParam& theta, const Pose& current) const;

  /// Bottom-face outward normal in the end-effector frame.
  Vec3 bottom_normal(const GeomParam& theta) const;
};

Scenario make_scenario(ScenarioKind kind, const GeomParam& theta_gt, std::uint64_t seed,
                       const ScenarioSettings& settings = {});
Scenario make_scenario(const std::string& name, const GeomParam& theta_gt,
                       std::uint64_t seed, const ScenarioSettings& settings = {});

/// Ground-truth parameters drawn uniformly from the scenario's test range:
/// pose z in +-3 mm and psi in +-5 deg; shape d1, d2 in +-3 mm; env l1, l2
/// in +-4 mm and h in +-3 mm.
std::vector<GeomParam> test_cases(ScenarioKind kind, int count, std::uint64_t seed);

/// Moves from the current pose toward the closest goal with the scenario's
/// per-action translation and rotation caps; returns the goal once within
/// both caps.
dynamics::Action policy(const dynamics::RobotState& state, const GeomParam& theta,
                        const Scenario& scenario);

struct HeuristicDecision {
  dynamics::Action action;
  bool release = false;
};

/// Straight descent by `translation_cap` until |force| exceeds `threshold`.
HeuristicDecision heuristic_policy(const dynamics::RobotState& state, const Wrench& measured,
                                   double threshold, double translation_cap = 0.005);

/// True wrench plus independent Gaussian noise per axis; sigma is ordered
/// (torque, force).
Wrench ft_sensor(const Wrench& true_wrench, const Vec6& sigma, std::uint64_t seed);
Wrench ft_sensor(const Wrench& true_wrench, const Vec6& sigma, std::mt19937_64& rng);

/// Angle (deg) between the bottom face under the true geometry and the table.
double angle_error(const dynamics::RobotState& final_state, const GeomParam& theta_gt,
                   const Scenario& scenario);

/// Horizontal distance (mm) between the bottom-face center and the pillar
/// top center.
double distance_error(const dynamics::RobotState& final_state, const GeomParam& theta_gt,
                      const Scenario& scenario);

/// angle_error for pose and shape, distance_error for env.
double placement_error(const dynamics::RobotState& final_state, const GeomParam& theta_gt,
                       const Scenario& scenario);

}  // namespace geoplace::tasks
