#pragma once

// Experiment configuration files and the command implementations behind the
// `distest` tool. Configs are JSON objects with fixed sections; unknown keys
// are rejected.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "distest/adaptive.hpp"
#include "distest/infodiag.hpp"
#include "distest/risk.hpp"

namespace distest {

std::string version_string();

struct NonparamSection {
  bool enabled = false;  ///< cmd_run: test the sequence model instead of a fixed d
  double s = 1.0;
  double R = 1.0;
  double s_min = 0.5;
  double s_max = 2.0;
  std::vector<std::string> signals{"BoundaryFlat", "LowFrequency"};
  /// Smoothness values at which cmd_adaptive plants a signal.
  std::vector<double> true_s{1.0};
  /// Signal norm multiplier M_n over the adaptive rate rho_s.
  double multiplier = 10.0;
  double threshold_constant = 2.0;
  double kappa_second = 2.0;
  bool calibrate_kappa_second = false;
  bool level_predicate = false;

  friend bool operator==(const NonparamSection&, const NonparamSection&) = default;
};

struct SweepSection {
  std::string axis = "d";
  std::vector<double> values;
  double target_risk = 0.5;
  double range = 100.0;

  friend bool operator==(const SweepSection&, const SweepSection&) = default;
};

struct DiagnoseSection {
  std::vector<std::string> kernels{"constant", "sign", "T1", "T2", "T3.2", "quantizer"};
  std::int64_t mc_samples = 1000000;
  int batches = 20;
  int bits_per_coord = 0;
  double sigmas = 5.0;

  friend bool operator==(const DiagnoseSection&, const DiagnoseSection&) = default;
};

struct ExperimentConfig {
  ProblemConfig problem;
  /// "T1", "T1-local", "T2", "T3" or "auto". Empty means missing.
  std::string protocol;
  int small_m_cutoff = 16;
  std::vector<std::string> family{"Flat", "Spike", "RandomSphere", "HalfFlat"};
  double rho2 = 0.0;
  std::int64_t reps = 1000;
  std::int64_t null_reps = 20000;
  std::uint64_t master_seed = 0;
  std::string engine = "fast";
  std::string threshold_file;
  std::string output;
  int threads = 0;
  bool auto_calibrate = false;
  NonparamSection nonparam;
  SweepSection sweep;
  DiagnoseSection diagnose;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Throws ValidationError on malformed input, unknown keys or a missing master_seed.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Full resolved config, pretty-printed (indent > 0) or on one line.
std::string to_json(const ExperimentConfig& cfg, int indent = 2);

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> reps;
  std::optional<int> threads;
  std::optional<std::string> out;
  bool auto_calibrate = false;
};

ExperimentConfig apply_overrides(ExperimentConfig cfg, const CliOverrides& o);

/// "# distest <version>", "# seed <seed>" and "# config <json>" lines.
std::string output_header(const ExperimentConfig& cfg);

/// Writes or updates the threshold table. Returns the calibration stored.
Calibration cmd_calibrate(const ExperimentConfig& cfg, std::ostream& log);

struct RunResult {
  std::string protocol;
  double rho2 = 0.0;
  RiskReport report;
  Calibration calibration;
  std::string csv;
  std::string json;
};
RunResult cmd_run(const ExperimentConfig& cfg, std::ostream& log);

struct SweepRun {
  SweepResult result;
  std::string csv;
};
SweepRun cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);

struct AdaptiveRow {
  double true_s = 0.0;
  std::string signal;
  double rho = 0.0;
  double type2_t1 = 0.0;
  double type2_second = 0.0;  ///< T2 (public) or T3 (private)
  double type2_combined = 0.0;
};
struct AdaptiveLevelRow {
  int level = 0;
  std::int64_t nu = 0;
  int mprime = 0;
  int level_bits = 0;
  /// Null means of S_I(L), of S_II(L) or S^{III,1}(L), and of S^{III,2}(L).
  double null_mean_s1 = 0.0;
  double null_mean_second = 0.0;
  double null_mean_s32 = 0.0;
};
struct AdaptiveRun {
  double type1_t1 = 0.0;
  double type1_second = 0.0;
  double type1_combined = 0.0;
  double kappa_second = 0.0;
  std::vector<AdaptiveRow> rows;
  std::vector<AdaptiveLevelRow> levels;
  std::int64_t max_bits_per_subtest = 0;
  std::string csv;
};
AdaptiveRun cmd_adaptive(const ExperimentConfig& cfg, std::ostream& log);

struct DiagnoseRun {
  std::vector<DpiReport> reports;
  std::vector<std::string> refused;
  std::string csv;
};
DiagnoseRun cmd_diagnose(const ExperimentConfig& cfg, std::ostream& log);

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};
/// Grid and Monte Carlo checks of the closed-form probability bounds plus
/// chi-square reference values.
std::vector<SelftestCheck> cmd_selftest(std::uint64_t seed, int threads, std::ostream& log);

/// Writes `text` to `path`, or to stdout when path is empty or "-".
void write_output(const std::string& path, const std::string& text);

}  // namespace distest
