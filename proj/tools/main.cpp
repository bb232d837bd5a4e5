#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "distest/experiment.hpp"
#include "distest/parallel.hpp"

namespace {

enum Exit { kOk = 0, kError = 1, kUsage = 2, kInfeasible = 3, kCheckFailed = 4 };

int dispatch(const std::string& command, const std::string& config_path, const distest::CliOverrides& o) {
  using namespace distest;
  if (command == "selftest") {
    const int threads = o.threads.value_or(0);
    const auto checks = cmd_selftest(o.seed.value_or(1), threads, std::cout);
    for (const auto& c : checks)
      if (!c.passed) return kCheckFailed;
    return kOk;
  }
  if (config_path.empty()) throw ValidationError(command + " needs --config PATH");
  ExperimentConfig cfg = apply_overrides(load_config(config_path), o);
  if (cfg.threads > 0) set_default_threads(cfg.threads);

  if (command == "calibrate") {
    if (o.out) cfg.threshold_file = *o.out;
    cmd_calibrate(cfg, std::cerr);
    std::cerr << "wrote " << cfg.threshold_file << "\n";
  } else if (command == "run") {
    const auto res = cmd_run(cfg, std::cerr);
    std::cout << res.json;
    if (!cfg.output.empty()) write_output(cfg.output, res.csv);
  } else if (command == "sweep") {
    write_output(cfg.output, cmd_sweep(cfg, std::cerr).csv);
  } else if (command == "adaptive") {
    write_output(cfg.output, cmd_adaptive(cfg, std::cerr).csv);
  } else if (command == "diagnose") {
    write_output(cfg.output, cmd_diagnose(cfg, std::cerr).csv);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation harness for distributed Gaussian mean testing under bit constraints"};
  app.set_version_flag("--version", distest::version_string());
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::int64_t reps = 0;
  int threads = 0;
  std::string out;
  bool auto_calibrate = false;
  auto* o_seed = app.add_option("--seed", seed, "Master seed (overrides the config)");
  auto* o_reps = app.add_option("--reps", reps, "Monte Carlo replications");
  auto* o_threads = app.add_option("--threads", threads, "Worker threads (default: hardware parallelism)");
  auto* o_out = app.add_option("--out", out, "Output path");
  app.add_option("--config", config_path, "Experiment config (JSON)");
  app.add_flag("--auto-calibrate", auto_calibrate, "Calibrate missing thresholds on the fly");

  for (const char* name : {"calibrate", "run", "sweep", "adaptive", "diagnose", "selftest"})
    app.add_subcommand(name)->fallthrough();
  app.get_subcommand("calibrate")->description("Compute null thresholds and store them in the threshold file");
  app.get_subcommand("run")->description("Estimate Type I + worst Type II at one signal size");
  app.get_subcommand("sweep")->description("Empirical detection thresholds along one axis");
  app.get_subcommand("adaptive")->description("Smoothness-adaptive tests on the sequence model");
  app.get_subcommand("diagnose")->description("Conditional-mean trace and spectral diagnostics");
  app.get_subcommand("selftest")->description("Check the closed-form probability bounds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  distest::CliOverrides o;
  if (o_seed->count()) o.seed = seed;
  if (o_reps->count()) o.reps = reps;
  if (o_threads->count()) {
    if (threads < 1) {
      std::cerr << "error: --threads must be >= 1\n";
      return kUsage;
    }
    o.threads = threads;
  }
  if (o_out->count()) o.out = out;
  o.auto_calibrate = auto_calibrate;

  try {
    return dispatch(app.get_subcommands().front()->get_name(), config_path, o);
  } catch (const distest::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const distest::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return kError;
  }
}
