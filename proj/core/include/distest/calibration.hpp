#pragma once

// Null-distribution thresholds, by exact enumeration where the null law is
// known in closed form and by seeded Monte Carlo otherwise.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "distest/engine.hpp"

namespace distest {

enum class CalibrationMethod { ExactEnumeration, MonteCarlo };

std::string_view to_string(CalibrationMethod method);

struct Calibration {
  std::vector<Threshold> thresholds;  ///< one per subtest
  CalibrationMethod method = CalibrationMethod::MonteCarlo;
  std::int64_t null_reps = 0;
  /// Rejection probability of the calibrated rule on the calibration sample
  /// (exact for enumeration).
  double achieved_level = 0.0;
  /// 99% binomial half-width of achieved_level (0 for enumeration).
  double level_radius = 0.0;
};

/// Weighted atoms (value, probability) of a discrete law.
using Atoms = std::vector<std::pair<double, double>>;

/// Sorts and merges equal values.
Atoms merge_atoms(Atoms atoms);
/// Smallest atom kappa with P(stat >= kappa) <= alpha, plus randomization on
/// the next atom below so that the rejection probability equals alpha.
/// With randomize = false the boundary probability is left at zero.
Threshold threshold_from_atoms(const Atoms& atoms, double alpha, bool randomize = true);
/// Same, for an empirical sample with equal weights.
Threshold threshold_from_sample(std::vector<double> sample, double alpha, bool randomize = true);

/// Exact null law of the T1 statistic (Binomial(m, 1/2) counts).
Atoms t1_null_atoms(std::int64_t m);
Calibration calibrate_exact_t1(std::int64_t m, double alpha, bool randomize = true);
/// (F^{-1}_{chi2_d}(1 - alpha) - d) / sqrt(d).
Calibration calibrate_exact_t1_local(int d, double alpha);

/// Null statistics of `reps` replications, stats[k][r] for subtest k.
std::vector<std::vector<double>> simulate_null(const TestProtocol& protocol, std::int64_t reps, const SeedNode& seed,
                                               EngineKind engine, int threads = 0);

/// Union calibration over the active subtests: a common per-subtest level is
/// found by bisection so that the OR rule rejects at most alpha, then the first
/// subtest's boundary atom is randomized to close the remaining gap.
Calibration calibrate_from_null(const std::vector<std::vector<double>>& null_stats, double alpha,
                                bool randomize = true);

Calibration calibrate_mc(const TestProtocol& protocol, double alpha, std::int64_t null_reps, const SeedNode& seed,
                         EngineKind engine = EngineKind::Fast, int threads = 0, bool randomize = true);

/// Exact when available (T1, T1-local), Monte Carlo otherwise.
Calibration calibrate(const TestProtocol& protocol, std::int64_t null_reps, const SeedNode& seed,
                      EngineKind engine = EngineKind::Fast, int threads = 0);

/// Persistent threshold store keyed by (protocol, config fingerprint, alpha).
class ThresholdTable {
 public:
  static std::string key(std::string_view protocol, const ProblemConfig& cfg);

  void put(std::string_view protocol, const ProblemConfig& cfg, const Calibration& cal);
  std::optional<Calibration> find(std::string_view protocol, const ProblemConfig& cfg) const;
  std::size_t size() const { return entries_.size(); }

  std::string to_json() const;
  static ThresholdTable from_json(const std::string& text);
  /// Missing file yields an empty table.
  static ThresholdTable load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::map<std::string, Calibration> entries_;
};

}  // namespace distest
