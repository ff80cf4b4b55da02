#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include <boost/math/distributions/students_t.hpp>

#include "geoplace/harness.hpp"

namespace geoplace::harness {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

VecX particle_mean(const estimation::Belief& b) {
  VecX m = VecX::Zero(b.particles.front().theta.size());
  for (const auto& p : b.particles) m += p.theta.values();
  return m / b.size();
}

void record_particles(StepRecord& r, const estimation::Belief& b) {
  for (const auto& p : b.particles) {
    r.particle_values.push_back(p.theta.values());
    r.particle_costs.push_back(p.cost);
  }
}

struct Trajectory {
  std::vector<dynamics::RobotState> states;
  std::vector<dynamics::Action> actions;
  std::vector<Wrench> wrenches;
};

Trajectory oracle_run(const tasks::Scenario& s) {
  Trajectory tr;
  tr.states.push_back(s.initial);
  for (int t = 0; t < s.T; ++t) {
    const auto action = tasks::policy(tr.states.back(), s.theta_gt, s);
    const auto r = dynamics::step(s.shapes, s.model, tr.states.back(), action, s.theta_gt,
                                  {false});
    tr.actions.push_back(action);
    tr.wrenches.push_back(r.wrench.value);
    tr.states.push_back(r.state);
  }
  return tr;
}

struct ModeRollout {
  MatX wrenches;  // 6H x 1 stacked values
  MatX dwrenches;  // 6H x P
  std::vector<std::vector<std::vector<geometry::PairId>>> modes;
  std::vector<std::vector<geometry::PairId>> impacts;
  int contacts = 0;
};

ModeRollout mode_rollout(const estimation::HistoryWindow& w, const GeomParam& theta,
                         const estimation::Simulator& sim, bool sens) {
  const int h = w.length();
  const int p = theta.size();
  ModeRollout out;
  out.wrenches = MatX::Zero(6 * h, 1);
  out.dwrenches = MatX::Zero(6 * h, p);
  dynamics::RobotState state = w.states.front();
  auto s = dynamics::StateSensitivity::zero(p);
  for (int k = 0; k < h; ++k) {
    auto r = dynamics::step(sim.shapes, sim.model, state, s, w.actions[k], theta, {sens});
    out.wrenches.block(6 * k, 0, 6, 1) = r.wrench.value.stacked();
    if (sens) out.dwrenches.block(6 * k, 0, 6, p) = r.wrench.dvalue_dtheta;
    out.modes.push_back(r.contact_modes);
    out.impacts.push_back(r.impact_pairs);
    if (!r.contact_modes.empty()) out.contacts = static_cast<int>(r.contact_modes.back().size());
    state = r.state;
    if (sens) s = std::move(r.sens);
  }
  return out;
}

}  // namespace

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) throw GeoplaceError("summarize: no values");
  Summary s;
  s.count = static_cast<int>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / s.count;
  if (s.count < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  const double sd = std::sqrt(ss / (s.count - 1));
  boost::math::students_t dist(s.count - 1);
  s.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * sd /
                 std::sqrt(static_cast<double>(s.count));
  return s;
}

std::uint64_t episode_seed(std::uint64_t seed, int index) {
  return splitmix64(splitmix64(seed) + static_cast<std::uint64_t>(index));
}

estimation::HistoryWindow make_window(const std::vector<dynamics::RobotState>& states,
                                      const std::vector<dynamics::Action>& actions,
                                      const std::vector<Wrench>& measured, int t, int H) {
  const int h = std::min(t, H);
  if (h < 1 || static_cast<int>(states.size()) <= t || static_cast<int>(actions.size()) < t ||
      static_cast<int>(measured.size()) < t) {
    throw GeoplaceError("make_window: history too short");
  }
  estimation::HistoryWindow w;
  w.start_step = t - h;
  w.states.assign(states.begin() + (t - h), states.begin() + t + 1);
  w.actions.assign(actions.begin() + (t - h), actions.begin() + t);
  w.measured.assign(measured.begin() + (t - h), measured.begin() + t);
  return w;
}

EpisodeRecord run_episode(const ExperimentConfig& config, const tasks::Scenario& scenario,
                          int case_index) {
  using clock = std::chrono::steady_clock;
  EpisodeRecord rec;
  rec.case_index = case_index;
  rec.seed = episode_seed(config.seed, case_index);
  rec.theta_gt = scenario.theta_gt.values();

  const estimation::Simulator sim{scenario.shapes, scenario.model};
  estimation::EstimatorSettings est = config.estimator;
  est.scale = config.perception_sigma_for(scenario.kind);
  const int n = config.particle_count();
  const VecX process = config.process_sigma_for(scenario.kind);

  std::mt19937_64 sensor_rng(splitmix64(rec.seed ^ 0x5e115011ULL));
  estimation::Belief belief;
  if (config.method != Method::kHeuristic) {
    belief = estimation::belief_init(scenario.theta_init, n, est.scale, splitmix64(rec.seed + 1));
  }

  // states[k] = x_k, actions[k] = u_k, measured[k] = y_{k+1}
  std::vector<dynamics::RobotState> states{scenario.initial};
  std::vector<dynamics::Action> actions;
  std::vector<Wrench> measured;
  Wrench last;  // y_0 is zero
  bool released = false;

  for (int t = 0; t < scenario.T && !released; ++t) {
    const auto start = clock::now();
    StepRecord step;
    step.t = t;
    step.state = states.back();
    try {
      switch (config.method) {
        case Method::kOurs: {
          if (t >= 1) {
            belief = estimation::belief_update(make_window(states, actions, measured, t, scenario.H),
                                               belief, sim, est);
          }
          const GeomParam theta = estimation::select_estimate(belief);
          step.estimate = theta.values();
          record_particles(step, belief);
          step.action = tasks::policy(states.back(), theta, scenario);
          break;
        }
        case Method::kPf: {
          if (t >= 1) {
            belief = estimation::pf_update(make_window(states, actions, measured, t, scenario.H),
                                           belief, config.beta, process,
                                           splitmix64(rec.seed + 1000 + t), sim, est)
                         .belief;
          }
          step.estimate = particle_mean(belief);
          record_particles(step, belief);
          step.action = tasks::policy(states.back(), scenario.theta_init.with_values(step.estimate),
                                      scenario);
          break;
        }
        case Method::kHeuristic: {
          const auto d = tasks::heuristic_policy(states.back(), last, config.heuristic_threshold,
                                                 scenario.settings.translation_cap);
          if (d.release) {
            released = true;
            continue;
          }
          step.action = d.action;
          break;
        }
      }
      const auto r = dynamics::step(scenario.shapes, scenario.model, states.back(), step.action,
                                    scenario.theta_gt, {false});
      step.measured = tasks::ft_sensor(r.wrench.value, scenario.sensor_sigma, sensor_rng);
      last = step.measured;
      actions.push_back(step.action);
      measured.push_back(step.measured);
      states.push_back(r.state);
      rec.steps.push_back(std::move(step));
    } catch (const GeoplaceError& e) {
      rec.failed = true;
      rec.failure = e.what();
      break;
    }
    rec.wall_seconds.push_back(std::chrono::duration<double>(clock::now() - start).count());
  }
  rec.final_state = states.back();
  rec.metric = tasks::placement_error(rec.final_state, scenario.theta_gt, scenario);
  return rec;
}

std::vector<EpisodeRecord> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto kind = tasks::parse_scenario(config.scenario);
  const auto cases = tasks::test_cases(kind, config.cases, config.seed);
  std::vector<EpisodeRecord> out(cases.size());
  const int count = static_cast<int>(cases.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(config.workers)
  for (int i = 0; i < count; ++i) {
    const auto scenario = tasks::make_scenario(kind, cases[i], episode_seed(config.seed, i),
                                               config.scenario_settings);
    out[i] = run_episode(config, scenario, i);
  }
  return out;
}

double relative_error(const MatX& analytic, const MatX& numeric, double floor) {
  if (analytic.rows() != numeric.rows() || analytic.cols() != numeric.cols()) {
    throw GeoplaceError("relative_error: shape mismatch");
  }
  if (analytic.size() == 0) return 0.0;
  const double scale = std::max(numeric.cwiseAbs().maxCoeff(), floor);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

double GradcheckReport::max_error() const {
  double m = 0.0;
  for (const auto& s : samples) m = std::max({m, s.wrench_error, s.residual_error});
  return m;
}

bool GradcheckReport::passed() const { return !samples.empty() && max_error() < tolerance; }

GradcheckReport gradcheck(const std::string& scenario, int samples, double step,
                          std::uint64_t seed, const tasks::ScenarioSettings& settings) {
  if (!(step > 0.0)) throw GeoplaceError("gradcheck: step must be positive");
  if (samples < 1) throw GeoplaceError("gradcheck: need at least one sample");
  const auto kind = tasks::parse_scenario(scenario);
  GradcheckReport report;
  report.scenario = scenario;
  report.step = step;
  std::mt19937_64 rng(seed);
  const int max_attempts = 20 * samples;
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(report.samples.size()) < samples;
       ++attempt) {
    const auto theta = tasks::test_cases(kind, 1, splitmix64(seed + attempt)).front();
    const auto s = tasks::make_scenario(kind, theta, seed, settings);
    const Trajectory tr = oracle_run(s);
    // Windows whose every step carries contact force.
    std::vector<int> contact_steps;
    for (int t = s.H; t <= s.T; ++t) {
      bool resting = true;
      for (int k = t - s.H; k < t; ++k) resting = resting && tr.wrenches[k].stacked().norm() > 0.0;
      if (resting) contact_steps.push_back(t);
    }
    if (contact_steps.empty()) {
      ++report.rejected;
      continue;
    }
    const int t = contact_steps[std::uniform_int_distribution<std::size_t>(
        0, contact_steps.size() - 1)(rng)];
    std::vector<Wrench> noisy;
    for (const auto& w : tr.wrenches) noisy.push_back(tasks::ft_sensor(w, s.sensor_sigma, rng));
    const auto window = make_window(tr.states, tr.actions, noisy, t, s.H);
    const estimation::Simulator sim{s.shapes, s.model};

    const ModeRollout base = mode_rollout(window, theta, sim, true);
    const int p = theta.size();
    MatX numeric(base.wrenches.rows(), p);
    RowX rnum(p);
    bool stable = true;
    for (const auto& i : base.impacts) stable = stable && i.empty();
    const auto cost = [&](const MatX& y) {
      std::vector<Wrench> pred;
      for (int k = 0; k < window.length(); ++k) {
        pred.push_back(Wrench::from_stacked(y.block(6 * k, 0, 6, 1)));
      }
      return estimation::residual(window.measured, pred);
    };
    for (int j = 0; j < p; ++j) {
      VecX plus = theta.values(), minus = theta.values();
      plus[j] += step;
      minus[j] -= step;
      const auto a = mode_rollout(window, theta.with_values(plus), sim, false);
      const auto b = mode_rollout(window, theta.with_values(minus), sim, false);
      stable = stable && a.modes == base.modes && b.modes == base.modes &&
               a.impacts == base.impacts && b.impacts == base.impacts;
      numeric.col(j) = (a.wrenches - b.wrenches) / (2.0 * step);
      rnum[j] = (cost(a.wrenches) - cost(b.wrenches)) / (2.0 * step);
    }
    if (!stable) {
      ++report.rejected;
      continue;
    }
    std::vector<dynamics::WrenchWithSensitivity> pred;
    for (int k = 0; k < window.length(); ++k) {
      pred.push_back({Wrench::from_stacked(base.wrenches.block(6 * k, 0, 6, 1)),
                      base.dwrenches.block(6 * k, 0, 6, p)});
    }
    const RowX ranalytic = estimation::residual_gradient(window.measured, pred);
    GradcheckSample g;
    g.case_index = attempt;
    g.t = t;
    g.contacts = base.contacts;
    g.mode_stable = true;
    g.wrench_error = relative_error(base.dwrenches, numeric);
    g.residual_error = relative_error(ranalytic, rnum);
    report.samples.push_back(g);
  }
  return report;
}

}  // namespace geoplace::harness
