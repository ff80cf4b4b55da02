#include <doctest.h>

#include <cmath>
#include <random>

#include "geoplace/so3.hpp"
#include "geoplace/tasks.hpp"
#include "test_support.hpp"

using namespace geoplace;
using namespace geoplace::tasks;
using geoplace::testing::relative_error;

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

GeomParam param(ScenarioKind kind, std::initializer_list<double> v) {
  VecX x(v.size());
  int i = 0;
  for (double d : v) x[i++] = d;
  return GeomParam(x, parameter_names(kind));
}

struct ClosedLoop {
  std::vector<dynamics::RobotState> states;
  std::vector<Wrench> wrenches;
  double max_penetration = 0.0;
};

ClosedLoop oracle(const Scenario& s) {
  ClosedLoop out;
  out.states.push_back(s.initial);
  const auto shapes = s.shapes(s.theta_gt);
  for (int t = 0; t < s.T; ++t) {
    const auto a = policy(out.states.back(), s.theta_gt, s);
    const auto r = dynamics::step(s.shapes, s.model, out.states.back(), a, s.theta_gt, {false});
    out.states.push_back(r.state);
    out.wrenches.push_back(r.wrench.value);
    for (const auto& g : geometry::pair_gaps(shapes, r.state.pose)) {
      out.max_penetration = std::max(out.max_penetration, -g.gap);
    }
  }
  return out;
}

// Outward normal of the bottom face from three of its vertices. Body
// vertices follow the corner order x fastest, then y, then z, so the first
// four form the bottom face.
Vec3 bottom_normal_from_vertices(const Scenario& s, const GeomParam& theta, const Pose& pose) {
  const auto shapes = s.shapes(theta);
  const Vec3 a = pose.transform(shapes.body_vertices[0].local);
  const Vec3 b = pose.transform(shapes.body_vertices[1].local);
  const Vec3 c = pose.transform(shapes.body_vertices[2].local);
  return -(b - a).cross(c - a).normalized();
}

}  // namespace

TEST_SUITE("tasks") {
  TEST_CASE("scenario names and parameters") {
    CHECK(parse_scenario("pose") == ScenarioKind::kPose);
    CHECK(parse_scenario("shape") == ScenarioKind::kShape);
    CHECK(parse_scenario("env") == ScenarioKind::kEnv);
    CHECK_THROWS_AS(parse_scenario("table"), UnknownScenario);
    CHECK_THROWS_AS(make_scenario("saucer", param(ScenarioKind::kPose, {0, 0}), 1),
                    UnknownScenario);
    CHECK(parameter_names(ScenarioKind::kEnv) == std::vector<std::string>{"l1", "l2", "h"});
    CHECK_THROWS_AS(make_scenario(ScenarioKind::kEnv, param(ScenarioKind::kPose, {0, 0}), 1),
                    GeoplaceError);
  }

  TEST_CASE("nominal pose scenario is the plain cube") {
    const Scenario s = make_scenario(ScenarioKind::kPose, param(ScenarioKind::kPose, {0, 0}), 3);
    CHECK(s.theta_init.values().isZero());
    CHECK(s.T == 50);
    CHECK(s.H == 5);
    const auto shapes = s.shapes(s.theta_gt);
    const auto corners = geoplace::testing::cube_corners(0.05);
    REQUIRE(shapes.body_vertices.size() == 8);
    for (const auto& v : shapes.body_vertices) {
      bool found = false;
      for (const auto& c : corners) found = found || (v.local - c).norm() < 1e-15;
      CHECK(found);
    }
    // straight descent from the start reaches the goal
    const Pose goal = s.closest_goal(s.theta_gt, s.initial.pose);
    CHECK((goal.position - s.initial.pose.position).head<2>().norm() < 1e-15);
    CHECK(goal.orientation.angularDistance(s.initial.pose.orientation) < 1e-12);
  }

  TEST_CASE("start is ten centimetres above the nominal goal") {
    for (auto kind : {ScenarioKind::kPose, ScenarioKind::kShape, ScenarioKind::kEnv}) {
      const auto cases = test_cases(kind, 3, 5);
      for (const auto& theta : cases) {
        const Scenario s = make_scenario(kind, theta, 1);
        const Pose nominal = s.closest_goal(s.theta_init, s.initial.pose);
        CHECK(s.initial.pose.position.z() - nominal.position.z() == doctest::Approx(0.10).epsilon(1e-12));
        CHECK((s.initial.pose.position.head<2>() - nominal.position.head<2>()).norm() < 1e-15);
      }
    }
  }

  TEST_CASE("env pillar keeps a 15 mm top") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.01, 0.01);
    for (int k = 0; k < 20; ++k) {
      const auto theta = param(ScenarioKind::kEnv, {u(rng), u(rng), u(rng)});
      const Scenario s = make_scenario(ScenarioKind::kEnv, theta, 1);
      const auto shapes = s.shapes(theta);
      REQUIRE(shapes.pillars.size() == 1);
      CHECK(2.0 * shapes.pillars[0].half_side == doctest::Approx(0.015).epsilon(1e-15));
      CHECK((shapes.pillars[0].top_center - Vec3(theta[0], theta[1], 0.05 + theta[2])).norm() <
            1e-15);
    }
  }

  TEST_CASE("test cases lie in the documented ranges") {
    const double pose_max[] = {0.003, 5.0 * kDeg};
    const double env_max[] = {0.004, 0.004, 0.003};
    for (const auto& t : test_cases(ScenarioKind::kPose, 200, 9)) {
      for (int i = 0; i < 2; ++i) CHECK(std::abs(t[i]) <= pose_max[i]);
    }
    for (const auto& t : test_cases(ScenarioKind::kShape, 200, 9)) {
      for (int i = 0; i < 2; ++i) CHECK(std::abs(t[i]) <= 0.003);
    }
    for (const auto& t : test_cases(ScenarioKind::kEnv, 200, 9)) {
      for (int i = 0; i < 3; ++i) CHECK(std::abs(t[i]) <= env_max[i]);
    }
    const auto a = test_cases(ScenarioKind::kEnv, 10, 9);
    const auto b = test_cases(ScenarioKind::kEnv, 10, 9);
    for (int i = 0; i < 10; ++i) CHECK(a[i].values() == b[i].values());
  }

  TEST_CASE("policy holds at a goal") {
    for (auto kind : {ScenarioKind::kPose, ScenarioKind::kShape, ScenarioKind::kEnv}) {
      for (const auto& theta : test_cases(kind, 5, 11)) {
        const Scenario s = make_scenario(kind, theta, 1);
        dynamics::RobotState at;
        at.pose = s.closest_goal(theta, s.initial.pose);
        const auto a = policy(at, theta, s);
        CHECK((a.reference.position - at.pose.position).norm() < 1e-12);
        CHECK(a.reference.orientation.angularDistance(at.pose.orientation) < 1e-9);
        // the goal is its own closest goal
        const Pose again = s.closest_goal(theta, at.pose);
        CHECK((again.position - at.pose.position).norm() < 1e-12);
      }
    }
  }

  TEST_CASE("policy respects the step caps") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 200; ++k) {
      const auto kind = static_cast<ScenarioKind>(k % 3);
      const auto theta = test_cases(kind, 1, 100 + k).front();
      const Scenario s = make_scenario(kind, theta, 1);
      dynamics::RobotState st;
      st.pose.position = Vec3(0.05 * u(rng), 0.05 * u(rng), 0.1 + 0.1 * u(rng));
      st.pose.orientation = so3::exp(Vec3(0.5 * u(rng), 0.5 * u(rng), 0.5 * u(rng)));
      const auto a = policy(st, theta, s);
      CHECK((a.reference.position - st.pose.position).norm() <= 0.005 + 1e-15);
      CHECK(a.reference.orientation.angularDistance(st.pose.orientation) <= 2.0 * kDeg + 1e-12);
    }
  }

  TEST_CASE("closest goal is deterministic and aligns the bottom face") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto kind : {ScenarioKind::kPose, ScenarioKind::kShape}) {
      for (const auto& theta : test_cases(kind, 10, 12)) {
        const Scenario s = make_scenario(kind, theta, 1);
        Pose cur;
        cur.position = Vec3(0.01 * u(rng), 0.01 * u(rng), 0.2);
        cur.orientation = so3::exp(Vec3(0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng)));
        const Pose g1 = s.closest_goal(theta, cur);
        const Pose g2 = s.closest_goal(theta, cur);
        CHECK(g1.position == g2.position);
        CHECK(g1.orientation.coeffs() == g2.orientation.coeffs());
        const Vec3 n = g1.orientation * s.bottom_normal(theta);
        CHECK((n + Vec3::UnitZ()).norm() < 1e-12);
        // the lowest vertex rests on the table
        double lowest = 1.0;
        for (const auto& v : s.shapes(theta).body_vertices) {
          lowest = std::min(lowest, g1.transform(v.local).z());
        }
        CHECK(std::abs(lowest) < 1e-12);
        CHECK(relative_error(g1.position.head<2>(), cur.position.head<2>()) < 1e-15);
      }
    }
  }

  TEST_CASE("oracle closed loop places within tolerance") {
    for (auto kind : {ScenarioKind::kPose, ScenarioKind::kShape, ScenarioKind::kEnv}) {
      const auto cases = test_cases(kind, 10, 1);
      for (std::size_t i = 0; i < cases.size(); ++i) {
        const Scenario s = make_scenario(kind, cases[i], i);
        const ClosedLoop run = oracle(s);
        const double err = placement_error(run.states.back(), cases[i], s);
        INFO(scenario_name(kind), " case ", i, " error ", err);
        if (kind == ScenarioKind::kEnv) {
          CHECK(err < 0.5);
        } else {
          CHECK(err < 0.2);
        }
        CHECK(run.max_penetration <= s.model.contact.penetration_tolerance);
        // resting on the support by the end
        CHECK(run.wrenches.back().force.z() > 0.5 * 9.81);
      }
    }
  }

  TEST_CASE("closed loop is bit-reproducible") {
    const auto theta = test_cases(ScenarioKind::kShape, 1, 4).front();
    const Scenario s = make_scenario(ScenarioKind::kShape, theta, 4);
    const ClosedLoop a = oracle(s);
    const ClosedLoop b = oracle(s);
    for (std::size_t t = 0; t < a.states.size(); ++t) {
      CHECK(a.states[t].pose.position == b.states[t].pose.position);
      CHECK(a.states[t].twist == b.states[t].twist);
    }
  }

  TEST_CASE("heuristic trigger") {
    dynamics::RobotState st;
    st.pose.position = Vec3(0.01, -0.02, 0.3);
    const auto free = heuristic_policy(st, Wrench{}, 2.0);
    CHECK_FALSE(free.release);
    CHECK((free.action.reference.position - Vec3(0.01, -0.02, 0.295)).norm() < 1e-15);
    Wrench w;
    w.force = Vec3(0, 0, 2.0);
    CHECK_FALSE(heuristic_policy(st, w, 2.0).release);
    w.force.z() = 2.0 + 1e-9;
    CHECK(heuristic_policy(st, w, 2.0).release);
  }

  TEST_CASE("heuristic suffices for height-only uncertainty") {
    for (double z : {-0.003, 0.0, 0.002}) {
      const auto theta = param(ScenarioKind::kPose, {z, 0.0});
      const Scenario s = make_scenario(ScenarioKind::kPose, theta, 1);
      dynamics::RobotState st = s.initial;
      Wrench y;
      bool released = false;
      for (int t = 0; t < s.T && !released; ++t) {
        const auto d = heuristic_policy(st, y, 2.0);
        if (d.release) {
          released = true;
          break;
        }
        const auto r = dynamics::step(s.shapes, s.model, st, d.action, theta, {false});
        st = r.state;
        y = r.wrench.value;
      }
      CHECK(released);
      CHECK(angle_error(st, theta, s) < 1e-9);
    }
  }

  TEST_CASE("sensor noise") {
    Wrench w;
    w.torque = Vec3(0.1, -0.2, 0.3);
    w.force = Vec3(1.0, 2.0, -3.0);
    const Wrench same = ft_sensor(w, Vec6::Zero(), 17);
    CHECK(same.stacked() == w.stacked());

    const Vec6 sigma = (Vec6() << 0.01, 0.01, 0.01, 0.1, 0.1, 0.1).finished();
    std::mt19937_64 rng(5);
    Vec6 sum = Vec6::Zero();
    const int n = 10000;
    for (int i = 0; i < n; ++i) sum += ft_sensor(w, sigma, rng).stacked();
    const Vec6 mean = sum / n;
    for (int i = 0; i < 6; ++i) CHECK(std::abs(mean[i] - w.stacked()[i]) < 3.0 * sigma[i] / 100.0);

    CHECK(ft_sensor(w, sigma, 99).stacked() == ft_sensor(w, sigma, 99).stacked());
    CHECK(ft_sensor(w, sigma, 99).stacked() != ft_sensor(w, sigma, 98).stacked());
    CHECK_THROWS_AS(ft_sensor(w, -sigma, 1), GeoplaceError);
  }

  TEST_CASE("angle error") {
    const auto theta = param(ScenarioKind::kPose, {0.001, 0.0});
    const Scenario s = make_scenario(ScenarioKind::kPose, theta, 1);
    dynamics::RobotState st;
    CHECK(angle_error(st, theta, s) < 1e-12);
    st.pose.orientation = Quat(Eigen::AngleAxisd(3.0 * kDeg, Vec3::UnitY()));
    CHECK(angle_error(st, theta, s) == doctest::Approx(3.0).epsilon(1e-10));

    // in-hand tilt cancelled by the hand
    const auto tilted = param(ScenarioKind::kPose, {0.0, 4.0 * kDeg});
    dynamics::RobotState back;
    back.pose.orientation = Quat(Eigen::AngleAxisd(-4.0 * kDeg, Vec3::UnitX()));
    CHECK(angle_error(back, tilted, s) < 1e-10);

    const auto env = make_scenario(ScenarioKind::kEnv, param(ScenarioKind::kEnv, {0, 0, 0}), 1);
    CHECK_THROWS_AS(angle_error(st, param(ScenarioKind::kEnv, {0, 0, 0}), env), WrongScenario);
  }

  TEST_CASE("angle error matches the vertex oracle") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto kind : {ScenarioKind::kPose, ScenarioKind::kShape}) {
      for (const auto& theta : test_cases(kind, 30, 41)) {
        const Scenario s = make_scenario(kind, theta, 1);
        dynamics::RobotState st;
        st.pose.orientation = so3::exp(Vec3(0.1 * u(rng), 0.1 * u(rng), u(rng)));
        const Vec3 n = bottom_normal_from_vertices(s, theta, st.pose);
        const double oracle = std::acos(std::clamp(-n.z(), -1.0, 1.0)) / kDeg;
        CHECK(angle_error(st, theta, s) == doctest::Approx(oracle).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("distance error") {
    const auto theta = param(ScenarioKind::kEnv, {0.002, -0.001, 0.0});
    const Scenario s = make_scenario(ScenarioKind::kEnv, theta, 1);
    dynamics::RobotState st;
    st.pose.position = Vec3(0.002, -0.001, 0.2);
    CHECK(distance_error(st, theta, s) < 1e-12);
    st.pose.position.x() += 0.004;
    CHECK(distance_error(st, theta, s) == doctest::Approx(4.0).epsilon(1e-9));
    const double before = distance_error(st, theta, s);
    for (double yaw : {0.3, 1.2, -2.5}) {
      st.pose.orientation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
      CHECK(distance_error(st, theta, s) == doctest::Approx(before).epsilon(1e-12));
    }
    const auto pose = make_scenario(ScenarioKind::kPose, param(ScenarioKind::kPose, {0, 0}), 1);
    CHECK_THROWS_AS(distance_error(st, theta, pose), WrongScenario);
  }

  TEST_CASE("wrench sensitivities on scenario trajectories") {
    // Resting steps from oracle runs: the step's dy/dtheta against central
    // differences with the incoming state held fixed.
    int checked = 0;
    for (auto kind : {ScenarioKind::kPose, ScenarioKind::kShape, ScenarioKind::kEnv}) {
      int per_kind = 0;
      for (const auto& theta : test_cases(kind, 200, 77)) {
        if (per_kind >= 20) break;
        const Scenario s = make_scenario(kind, theta, 1);
        const ClosedLoop run = oracle(s);
        const int t = s.T - 1 - (per_kind % 8);
        const auto& st = run.states[t];
        const auto a = policy(st, theta, s);
        const auto base = dynamics::step(s.shapes, s.model, st, a, theta);
        if (!base.impact_pairs.empty() || base.contact_modes.back().empty()) continue;
        const auto fn = [&](const VecX& v) -> VecX {
          return dynamics::step(s.shapes, s.model, st, a, theta.with_values(v), {false})
              .wrench.value.stacked();
        };
        bool stable = true;
        for (int j = 0; j < theta.size() && stable; ++j) {
          for (double sgn : {-1.0, 1.0}) {
            VecX v = theta.values();
            v[j] += sgn * 1e-6;
            stable = stable &&
                     dynamics::step(s.shapes, s.model, st, a, theta.with_values(v), {false})
                             .contact_modes == base.contact_modes;
          }
        }
        if (!stable) continue;
        const MatX fd = geoplace::testing::central_difference(fn, theta.values(), 1e-6);
        INFO(scenario_name(kind), " theta ", theta.values().transpose());
        CHECK(relative_error(base.wrench.dvalue_dtheta, fd) < 1e-4);
        ++per_kind;
        ++checked;
      }
      CHECK(per_kind >= 20);
    }
    CHECK(checked >= 60);
  }
}
