// Serial vs OpenMP belief update on a resting pose-scenario window.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "geoplace/estimation.hpp"
#include "geoplace/harness.hpp"
#include "geoplace/tasks.hpp"

using namespace geoplace;

namespace {

struct Fixture {
  estimation::HistoryWindow window;
  estimation::Simulator sim;
  estimation::EstimatorSettings settings;
  GeomParam theta_init;

  Fixture() {
    const auto theta = tasks::test_cases(tasks::ScenarioKind::kPose, 1, 3).front();
    const auto s = tasks::make_scenario(tasks::ScenarioKind::kPose, theta, 3);
    sim = {s.shapes, s.model};
    theta_init = s.theta_init;
    settings.scale = (VecX(2) << 0.002, 0.035).finished();
    std::vector<dynamics::RobotState> x{s.initial};
    std::vector<dynamics::Action> u;
    std::vector<Wrench> y;
    std::mt19937_64 rng(5);
    for (int t = 0; t < s.T; ++t) {
      u.push_back(tasks::policy(x.back(), s.theta_gt, s));
      const auto r = dynamics::step(s.shapes, s.model, x.back(), u.back(), s.theta_gt, {false});
      y.push_back(tasks::ft_sensor(r.wrench.value, s.sensor_sigma, rng));
      x.push_back(r.state);
    }
    window = harness::make_window(x, u, y, s.T, s.H);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_BeliefSerial(benchmark::State& state) {
  const auto& f = fixture();
  const auto b = estimation::belief_init(f.theta_init, static_cast<int>(state.range(0)),
                                         f.settings.scale, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimation::belief_update_serial(f.window, b, f.sim, f.settings));
  }
}

void BM_BeliefParallel(benchmark::State& state) {
  const auto& f = fixture();
  const auto b = estimation::belief_init(f.theta_init, static_cast<int>(state.range(0)),
                                         f.settings.scale, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimation::belief_update(f.window, b, f.sim, f.settings));
  }
  state.counters["threads"] = omp_get_max_threads();
}

}  // namespace

BENCHMARK(BM_BeliefSerial)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BeliefParallel)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
