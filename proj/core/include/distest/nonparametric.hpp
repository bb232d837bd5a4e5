#pragma once

// Sequence-model layer: signals given by wavelet coefficients f_{li},
// level l holding 2^l entries, and the reduction of the nonparametric test
// to a finite-dimensional protocol on levels 0..L.

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "distest/calibration.hpp"
#include "distest/engine.hpp"

namespace distest {

struct SobolevBall {
  double s = 1.0;
  double R = 1.0;
};

void validate_ball(const SobolevBall& ball);

/// nu_L = 2^{L+1} - 1 coefficients on levels 0..L.
std::int64_t level_dimension(int L);

class LeveledSignal {
 public:
  LeveledSignal() = default;
  /// levels[l] must hold 2^l entries.
  explicit LeveledSignal(std::vector<std::vector<double>> levels);
  static LeveledSignal zeros(int max_level);

  int max_level() const { return static_cast<int>(levels_.size()) - 1; }
  const std::vector<double>& level(int l) const { return levels_.at(static_cast<std::size_t>(l)); }
  double squared_norm() const;
  double l2_norm() const;
  /// sum_l 2^{2 l s} sum_i f_{li}^2.
  double sobolev_norm_squared(double s) const;
  double sobolev_norm(double s) const;
  /// ||f - f^L||^2, the mass above level L.
  double tail_squared_norm(int L) const;
  /// f^L flattened level by level, then by index; levels beyond max_level are zero.
  Signal truncated(int L) const;

 private:
  std::vector<std::vector<double>> levels_;
};

/// max(1, floor(log2(1/rho) / s)); 1 when rho >= 1.
int truncation_level(double s, double rho);

/// Constant-one finite-dimensional rates (squared):
/// public  (sqrt d / n) min(sqrt(d / (b ^ d)), sqrt m),
/// private (sqrt d / n) min(d / (b ^ d), sqrt m).
double theoretical_rate_finite(std::int64_t n, std::int64_t m, std::int64_t d, std::int64_t b, Coin coin);
double theoretical_rate_finite(const ProblemConfig& cfg);

enum class RateRegime { Full, Intermediate, Low };
std::string_view to_string(RateRegime regime);

/// Budget regime of the known-smoothness nonparametric rate.
RateRegime nonparam_regime(double n, double m, double b, double s, Coin coin);
/// Squared separation rate for known smoothness, three regimes per coin.
double theoretical_rate_nonparam(double n, double m, double b, const SobolevBall& ball, Coin coin);

/// Rows f^L + sqrt(m/n) Z^j of dimension nu_L; cfg.d is ignored.
Dataset sample_sequence_observations(const ProblemConfig& cfg, const LeveledSignal& f, int L, const SeedNode& seed);

enum class AlternativeShape { BoundaryFlat, LowFrequency, RandomDirection };
std::string_view to_string(AlternativeShape shape);
AlternativeShape parse_alternative_shape(std::string_view text);

/// Signal with ||f||_2 = rho and Sobolev norm <= R. BoundaryFlat spreads the
/// mass evenly over level truncation_level(s, rho); RandomDirection is uniform
/// on the sphere of V_L for the same L. Throws InfeasibleError otherwise.
LeveledSignal make_sobolev_alternative(const SobolevBall& ball, double rho, AlternativeShape shape,
                                       const SeedNode& seed);

/// The reduced finite-dimensional test used for a tested radius rho.
class NonparamTest {
 public:
  NonparamTest(const ProblemConfig& cfg, const SobolevBall& ball, double rho, const ProtocolOptions& opts = {});

  int level() const { return level_; }
  const ProblemConfig& reduced_config() const { return reduced_; }
  const TestProtocol& protocol() const { return protocol_; }

  Calibration calibrate(std::int64_t null_reps, const SeedNode& seed, EngineKind engine, int threads = 0) const;
  /// Statistics of one replication on f^L.
  Outcome run(const LeveledSignal& f, const SeedNode& rep, EngineKind engine) const;

 private:
  ProblemConfig reduced_;
  int level_;
  TestProtocol protocol_;
};

/// Decision of the reduced protocol for one replication.
bool run_nonparam_test(const NonparamTest& test, const Calibration& cal, const LeveledSignal& f, const SeedNode& rep,
                       EngineKind engine = EngineKind::Exact);

}  // namespace distest
