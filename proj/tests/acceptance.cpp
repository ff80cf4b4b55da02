// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "geoplace/dynamics.hpp"
#include "geoplace/estimation.hpp"
#include "geoplace/harness.hpp"
#include "geoplace/lcp.hpp"
#include "geoplace/tasks.hpp"
#include "test_support.hpp"

using namespace geoplace;
namespace fs = std::filesystem;
namespace h = geoplace::harness;

namespace {

using clock_type = std::chrono::steady_clock;

const tasks::ScenarioKind kKinds[] = {tasks::ScenarioKind::kPose, tasks::ScenarioKind::kShape,
                                      tasks::ScenarioKind::kEnv};

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

// Oracle closed loop under the true geometry; no sensor in the loop.
struct Run {
  std::vector<dynamics::RobotState> states;
  std::vector<dynamics::Action> actions;
  std::vector<Wrench> wrenches;
};

Run oracle_run(const tasks::Scenario& s) {
  Run r;
  r.states.push_back(s.initial);
  for (int t = 0; t < s.T; ++t) {
    const auto a = tasks::policy(r.states.back(), s.theta_gt, s);
    const auto step = dynamics::step(s.shapes, s.model, r.states.back(), a, s.theta_gt, {false});
    r.actions.push_back(a);
    r.wrenches.push_back(step.wrench.value);
    r.states.push_back(step.state);
  }
  return r;
}

std::vector<tasks::Scenario> seeded_scenarios(tasks::ScenarioKind kind, int count,
                                              std::uint64_t seed) {
  std::vector<tasks::Scenario> out;
  const auto cases = tasks::test_cases(kind, count, seed);
  for (int i = 0; i < count; ++i) {
    out.push_back(tasks::make_scenario(kind, cases[i], h::episode_seed(seed, i)));
  }
  return out;
}

void gradient_fidelity() {
  const auto t0 = clock_type::now();
  bool ok = true;
  std::ostringstream d;
  for (auto kind : kKinds) {
    const auto name = tasks::scenario_name(kind);
    const auto r = h::gradcheck(name, 20, 1e-6, 1);
    ok = ok && r.samples.size() >= 20 && r.max_error() < 1e-3;
    d << name << " " << r.samples.size() << " samples max " << r.max_error() << "; ";
  }
  const double s = seconds_since(t0);
  d << s << " s";
  report(1, ok && s < 120.0, d.str());
}

void lcp_correctness() {
  const auto t0 = clock_type::now();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  double worst_diff = 0.0, worst_comp = 0.0;
  bool ok = true;
  for (int k = 0; k < 1000; ++k) {
    const int n = 3 * (1 + k % 3);
    lcp::LcpProblem p{testing::random_spd(n, rng), VecX(n)};
    for (int i = 0; i < n; ++i) p.b[i] = g(rng);
    const auto s = lcp::lcp_solve(p);
    const auto oracle = testing::lcp_enumerate(p.M, p.b);
    if (oracle.size() != 1) {
      ok = false;
      continue;
    }
    worst_diff = std::max(worst_diff, (s.lambda - oracle.front()).cwiseAbs().maxCoeff());
    worst_comp = std::max(worst_comp, lcp::complementarity_residual(s));
  }
  const double s = seconds_since(t0);
  std::ostringstream d;
  d << "max |lambda - oracle| " << worst_diff << ", max complementarity " << worst_comp << "; "
    << s << " s";
  report(2, ok && worst_diff <= 1e-8 && worst_comp <= 1e-9 && s < 60.0, d.str());
}

void toi_gradient() {
  dynamics::BodyModel m = dynamics::make_body_model(1.0, 0.02, 30.0, 1000.0, 0.7, 0.01);
  m.gravity = Vec3::Zero();
  const double side = 0.05;
  const auto model = testing::cube_over_table(side);
  double worst = 0.0, worst_fd = 0.0;
  bool ok = true;
  for (double vz : {-0.05, -0.1, -0.2, -0.5}) {
    for (double gap : {1e-4, 3e-4}) {
      for (double table : {-0.002, 0.0, 0.003}) {
        const GeomParam theta(VecX::Constant(1, table), {"table"});
        dynamics::RobotState s;
        s.pose.position = Vec3(0, 0, table + side / 2 + gap);
        s.twist.tail<3>() = Vec3(0, 0, vz);
        const auto toi = dynamics::detect_toi(model, m, s, Wrench{}, m.dt, theta);
        if (!toi) {
          ok = false;
          continue;
        }
        Pose at = s.pose;
        at.position.z() += vz * toi->time;
        const auto fs = geometry::detect_contacts(model, at, s.twist, theta);
        if (fs.empty()) {
          ok = false;
          continue;
        }
        // Raising the table by d shortens the flight by d / |v_z|.
        const double closed_form = -1.0 / std::abs(vz);
        const RowX grad = dynamics::toi_gradient(fs.front(), vz);
        worst = std::max(worst, std::abs(grad[0] - closed_form) / std::abs(closed_form));
        const auto time_at = [&](double x) {
          const auto t = dynamics::detect_toi(model, m, s, Wrench{}, m.dt,
                                              theta.with_values(VecX::Constant(1, x)));
          return t ? t->time : NAN;
        };
        const double fd = (time_at(table + 1e-6) - time_at(table - 1e-6)) / 2e-6;
        worst_fd = std::max(worst_fd, std::abs(fd - grad[0]) / std::abs(grad[0]));
      }
    }
  }
  std::ostringstream d;
  d << "max relative error " << worst << " vs closed form, " << worst_fd
    << " vs finite differences of the impact time, over 24 drops";
  report(3, ok && worst <= 1e-6 && worst_fd <= 1e-4, d.str());
}

void zero_residual() {
  double worst = 0.0;
  int windows = 0;
  bool ok = true;
  for (auto kind : kKinds) {
    for (const auto& s : seeded_scenarios(kind, 10, 1)) {
      const auto run = oracle_run(s);
      const estimation::Simulator sim{s.shapes, s.model};
      for (int t = 1; t <= s.T; ++t) {
        const auto w = h::make_window(run.states, run.actions, run.wrenches, t, s.H);
        const auto e = estimation::evaluate(w, s.theta_gt, sim, {}, false);
        ok = ok && e.ok;
        worst = std::max(worst, e.cost);
        ++windows;
      }
    }
  }
  std::ostringstream d;
  d << "max r(theta_gt) " << worst << " over " << windows << " windows";
  report(4, ok && worst <= 1e-10, d.str());
}

void oracle_policy() {
  bool ok = true;
  std::ostringstream d;
  for (auto kind : kKinds) {
    double worst = 0.0;
    for (const auto& s : seeded_scenarios(kind, 10, 1)) {
      try {
        const auto run = oracle_run(s);
        worst = std::max(worst, tasks::placement_error(run.states.back(), s.theta_gt, s));
      } catch (const GeoplaceError&) {
        worst = INFINITY;
      }
    }
    const bool env = kind == tasks::ScenarioKind::kEnv;
    ok = ok && worst < (env ? 0.5 : 0.2);
    d << tasks::scenario_name(kind) << " max " << worst << (env ? " mm; " : " deg; ");
  }
  report(5, ok, d.str());
}

void estimation_convergence() {
  const auto t0 = clock_type::now();
  bool ok = true;
  std::ostringstream d;
  for (auto kind : kKinds) {
    std::map<h::Method, double> mean;
    for (auto method : {h::Method::kOurs, h::Method::kPf, h::Method::kHeuristic}) {
      h::ExperimentConfig c;
      c.scenario = tasks::scenario_name(kind);
      c.method = method;
      double sum = 0.0;
      const auto records = h::run_experiment(c);
      for (const auto& r : records) sum += r.metric;
      mean[method] = sum / records.size();
    }
    const bool env = kind == tasks::ScenarioKind::kEnv;
    const double ours = mean[h::Method::kOurs];
    const bool pass = ours < (env ? 2.0 : 1.0) && ours < mean[h::Method::kPf] &&
                      ours < mean[h::Method::kHeuristic];
    ok = ok && pass;
    d << tasks::scenario_name(kind) << " ours " << ours << " pf " << mean[h::Method::kPf]
      << " heuristic " << mean[h::Method::kHeuristic] << (env ? " mm" : " deg")
      << (pass ? "; " : " (fails); ");
  }
  const double s = seconds_since(t0);
  d << s << " s";
  report(6, ok && s < 1800.0, d.str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism(const std::string& cli) {
  const fs::path root = fs::temp_directory_path() / "geoplace_acceptance";
  fs::remove_all(root);
  bool ok = true;
  int compared = 0;
  const char* runs[] = {"-s pose -m ours --cases 2", "-s shape -m pf --cases 3",
                        "-s env -m heuristic --cases 3", "-s env -m ours --cases 2 -n 4"};
  int k = 0;
  for (const char* args : runs) {
    std::string dirs[2];
    for (int rep = 0; rep < 2; ++rep) {
      dirs[rep] = (root / (std::to_string(k) + "_" + std::to_string(rep))).string();
      const std::string cmd =
          cli + " run " + args + " --seed 7 -f both -o " + dirs[rep] + " >/dev/null 2>&1";
      const int status = std::system(cmd.c_str());
      ok = ok && WIFEXITED(status) && WEXITSTATUS(status) == 0;
    }
    for (const char* f : {"results.json", "summary.csv", "traces.csv"}) {
      const auto a = slurp(fs::path(dirs[0]) / f);
      ok = ok && !a.empty() && a == slurp(fs::path(dirs[1]) / f);
      ++compared;
    }
    ++k;
  }
  fs::remove_all(root);
  std::ostringstream d;
  d << compared << " file pairs from repeated runs compared";
  report(7, ok, d.str());
}

void pf_mechanics() {
  const double zero = estimation::pf_weights(VecX::Zero(1), 1.0)[0];
  const VecX uniform = estimation::normalize_weights(
      estimation::pf_weights(VecX::Constant(50, 0.731), 1.0));
  const double spread = (uniform.array() - 1.0 / 50.0).abs().maxCoeff();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool counts = true;
  for (int trial = 0; trial < 100; ++trial) {
    VecX w(50);
    for (int i = 0; i < 50; ++i) w[i] = u(rng);
    counts = counts &&
             estimation::low_variance_resample(estimation::normalize_weights(w), 50, rng).size() ==
                 50;
  }
  std::ostringstream d;
  d << "zero-cost weight " << zero << ", resampled size 50 kept " << (counts ? "yes" : "no")
    << ", uniform spread " << spread;
  report(8, zero == 1.0 && counts && spread <= 1e-12, d.str());
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "geoplace";
  const std::vector<std::function<void()>> checks{
      gradient_fidelity, lcp_correctness, toi_gradient, zero_residual,
      oracle_policy,     estimation_convergence, [&] { determinism(cli); }, pf_mechanics};
  for (const auto& c : checks) {
    try {
      c();
    } catch (const std::exception& e) {
      std::printf("error: %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
