#pragma once

// Monte Carlo testing risk, empirical detection thresholds and rate sweeps.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "distest/calibration.hpp"
#include "distest/engine.hpp"

namespace distest {

enum class AlternativeKind { Flat, Spike, RandomSphere, HalfFlat };

std::string_view to_string(AlternativeKind kind);
AlternativeKind parse_alternative(std::string_view text);

/// Signal of dimension d with ||f||_2 = rho. RandomSphere uses `seed`.
Signal make_alternative(AlternativeKind kind, int d, double rho, const SeedNode& seed);

struct AlternativeFamily {
  std::vector<AlternativeKind> members{AlternativeKind::Flat, AlternativeKind::Spike, AlternativeKind::RandomSphere,
                                       AlternativeKind::HalfFlat};
};

AlternativeFamily parse_family(const std::vector<std::string>& names);

struct RunOptions {
  EngineKind engine = EngineKind::Fast;
  int threads = 0;
};

/// Type I from `reps` null replications (rep nodes seed/null-risk[r]) and
/// Type II per member (seed/<label>[r]). Null and alternatives share nothing.
RiskReport estimate_risk(const TestProtocol& protocol, const Calibration& cal, const AlternativeFamily& family,
                         double rho, std::int64_t reps, const SeedNode& seed, const RunOptions& run = {});

/// Type I only.
double estimate_type1(const TestProtocol& protocol, const Calibration& cal, std::int64_t reps, const SeedNode& seed,
                      const RunOptions& run = {}, std::int64_t* max_bits = nullptr);

/// Worst Type II over the family at radius rho.
double estimate_worst_type2(const TestProtocol& protocol, const Calibration& cal, const AlternativeFamily& family,
                            double rho, std::int64_t reps, const SeedNode& seed, const RunOptions& run = {},
                            std::int64_t* max_bits = nullptr);

struct ThresholdSearchOptions {
  double target_risk = 0.5;
  /// Search interval [rate / range, rate * range] on rho^2.
  double range = 100.0;
  std::int64_t coarse_reps = 500;
  std::int64_t fine_reps = 2000;
  std::int64_t type1_reps = 4000;
  /// Bracket ratio (hi/lo on rho^2) below which the search counts as fine.
  double fine_ratio = 4.0;
  /// Stop once hi/lo on rho^2 falls below this.
  double stop_ratio = 1.05;
  int max_steps = 40;
};

struct SearchStep {
  double rho2 = 0.0;
  double worst_risk = 0.0;
  std::int64_t reps = 0;
};

struct ThresholdResult {
  bool found = false;
  /// Geometric midpoint of the final bracket.
  double rho2 = 0.0;
  double rho2_lo = 0.0;
  double rho2_hi = 0.0;
  double type1 = 0.0;
  std::vector<SearchStep> steps;
  std::string message;

  double rho() const;
  double bracket_width() const { return rho2_hi - rho2_lo; }
};

/// Bisection on log rho^2 between rate/range and rate*range, where rate is
/// theoretical_rate_finite(cfg). Every step reuses the same replication seeds.
/// The reported rho2 interpolates the risk crossing inside the final bracket.
ThresholdResult find_threshold(const TestProtocol& protocol, const Calibration& cal, const AlternativeFamily& family,
                               const SeedNode& seed, const ThresholdSearchOptions& opts = {},
                               const RunOptions& run = {});

enum class SweepAxis { D, M, N, B };
std::string_view to_string(SweepAxis axis);
SweepAxis parse_axis(std::string_view text);

struct SweepPoint {
  double value = 0.0;
  double empirical_rho2 = 0.0;
  double theoretical_rho2 = 0.0;
  double rho2_lo = 0.0;
  double rho2_hi = 0.0;
  bool found = false;
  std::string protocol;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::D;
  std::vector<SweepPoint> points;
  double fitted_slope = 0.0;
  double intercept = 0.0;
  double slope_lo = 0.0;
  double slope_hi = 0.0;
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// Ordinary least squares of y on x.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);
/// Two-sided 97.5% Student-t quantile.
double student_t975(int dof);

struct SweepOptions {
  /// "auto" resolves per axis point.
  std::string protocol = "auto";
  ProtocolOptions protocol_options;
  std::int64_t null_reps = 20000;
  ThresholdSearchOptions search;
  RunOptions run;
};

/// One find_threshold per axis value (sorted ascending), then a least-squares
/// slope of log rho*^2 on log value with a 95% interval.
SweepResult rate_sweep(const ProblemConfig& base, SweepAxis axis, std::vector<double> values,
                       const AlternativeFamily& family, const SeedNode& seed, const SweepOptions& opts = {});

ProblemConfig with_axis(ProblemConfig cfg, SweepAxis axis, double value);

}  // namespace distest
