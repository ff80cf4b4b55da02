// Command-line front end: run experiments, check gradients, re-emit results.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "geoplace/harness.hpp"

namespace h = geoplace::harness;

namespace {

constexpr int kConfigExit = 2;
constexpr int kIoExit = 3;
constexpr int kCheckExit = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geoplace: geometry estimation for stable placement"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment and write result files");
  std::string config_path;
  std::optional<std::string> scenario, method, out_dir, format;
  std::optional<std::uint64_t> seed;
  std::optional<int> cases, particles;
  run->add_option("-c,--config", config_path, "YAML config file");
  run->add_option("-s,--scenario", scenario, "pose, shape or env");
  run->add_option("-m,--method", method, "ours, pf or heuristic");
  run->add_option("--seed", seed, "experiment seed");
  run->add_option("-o,--out", out_dir, "output directory");
  run->add_option("-f,--format", format, "json, csv or both");
  run->add_option("--cases", cases, "number of test cases");
  run->add_option("-n,--particles", particles, "particle count (0 = method default)");

  auto* grad = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  std::string grad_scenario = "pose";
  int samples = 20;
  double step = 1e-6;
  std::uint64_t grad_seed = 1;
  std::string grad_out;
  grad->add_option("-s,--scenario", grad_scenario, "pose, shape or env");
  grad->add_option("--samples", samples, "number of in-contact windows")->check(CLI::PositiveNumber);
  grad->add_option("--step", step, "central-difference step")->check(CLI::PositiveNumber);
  grad->add_option("--seed", grad_seed, "sampling seed");
  grad->add_option("-o,--out", grad_out, "write the JSON report here");

  auto* emit = app.add_subcommand("emit", "re-emit a results.json in another format");
  std::string input;
  std::string emit_out = "results";
  std::string emit_format = "csv";
  emit->add_option("-i,--input", input, "results.json from a previous run")->required();
  emit->add_option("-o,--out", emit_out, "output directory");
  emit->add_option("-f,--format", emit_format, "json, csv or both");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      h::ExperimentConfig config;
      if (!config_path.empty()) config = h::load_config(config_path);
      if (scenario) config.scenario = *scenario;
      if (method) config.method = h::parse_method(*method);
      if (seed) config.seed = *seed;
      if (out_dir) config.output_dir = *out_dir;
      if (format) config.format = *format;
      if (cases) config.cases = *cases;
      if (particles) config.particles = *particles;
      config.validate();
      for (const auto& w : config.warnings()) std::cerr << "warning: " << w << '\n';
      const auto records = h::run_experiment(config);
      h::emit_results(config, records, config.output_dir, config.format);
      std::vector<double> m;
      int failed = 0;
      for (const auto& r : records) {
        m.push_back(r.metric);
        failed += r.failed;
      }
      const auto s = h::summarize(m);
      std::printf("%s %s: mean %.4f [%.4f, %.4f] over %d cases (%d failed)\n",
                  config.scenario.c_str(), h::method_name(config.method).c_str(), s.mean, s.low(),
                  s.high(), s.count, failed);
      return 0;
    }
    if (*grad) {
      const auto report = h::gradcheck(grad_scenario, samples, step, grad_seed);
      const auto text = h::gradcheck_json(report);
      if (!grad_out.empty()) {
        std::ofstream out(grad_out);
        if (!(out << text << '\n')) throw h::IoError("cannot write " + grad_out);
      }
      std::printf("%s: %zu samples, %d rejected, max relative error %.3e (%s)\n",
                  grad_scenario.c_str(), report.samples.size(), report.rejected,
                  report.max_error(), report.passed() ? "pass" : "fail");
      return report.passed() ? 0 : kCheckExit;
    }
    if (*emit) {
      const auto [config, records] = h::read_results(input);
      h::emit_results(config, records, emit_out, emit_format);
      return 0;
    }
  } catch (const h::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const geoplace::tasks::UnknownScenario& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const h::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIoExit;
  } catch (const geoplace::GeoplaceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
