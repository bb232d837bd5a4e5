#pragma once

// A finite-dimensional protocol bound to a ProblemConfig, runnable either on
// the full data path (sample, encode, aggregate) or through a sampler that
// draws the central statistic directly from its exact conditional law.
//
// Seed layout for one replication node `rep`:
//   rep/data/machine[j]     observation noise of machine j
//   rep/coin                public coin (Haar rotation)
//   rep/encode/machine[j]   private randomness of machine j's encoder
//   rep/central             tie-break coin of the central machine
//   rep/fast                statistic-level sampler

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "distest/model.hpp"
#include "distest/protocols.hpp"
#include "distest/randomness.hpp"

namespace distest {

enum class EngineKind { Exact, Fast };

std::string_view to_string(EngineKind engine);
EngineKind parse_engine(std::string_view text);

/// Rejection rule for one statistic: reject when stat >= kappa; when stat
/// equals the atom just below kappa, reject with probability boundary_prob.
struct Threshold {
  double kappa = std::numeric_limits<double>::infinity();
  double boundary = -std::numeric_limits<double>::infinity();
  double boundary_prob = 0.0;

  bool rejects(double stat, double u) const;
};

/// Relative tolerance used to identify equal atoms of discrete statistics.
bool same_atom(double a, double b);

/// Result of one replication.
struct Outcome {
  /// One entry per subtest; NaN marks an inactive subtest.
  std::vector<double> stats;
  /// Uniform draw of the central tie-break coin.
  double tie_u = 0.0;
  /// Longest transcript emitted by any machine (0 for the fast engine).
  std::int64_t max_bits = 0;
  /// Per-machine transcripts, exact engine only.
  std::vector<Transcript> transcripts;
};

class TestProtocol {
 public:
  TestProtocol(ProtocolKind kind, const ProblemConfig& cfg);

  ProtocolKind kind() const { return kind_; }
  std::string_view name() const { return protocol_name(kind_); }
  const ProblemConfig& config() const { return cfg_; }
  bool requires_public_coin() const { return kind_ == ProtocolKind::T2; }
  /// 1, or 2 for T3 (T3.1 and T3.2, the latter possibly inactive).
  int statistic_count() const { return kind_ == ProtocolKind::T3 ? 2 : 1; }
  /// Bits each machine is allowed to send under this protocol.
  int bits_per_machine() const;
  const T3Layout& t3_layout() const { return layout_; }

  /// Machine j's message. `coin` is ignored unless requires_public_coin().
  Transcript encode(int j, std::span<const double> x, const SeedNode& coin, const SeedNode& rep) const;
  /// Central statistics from a full set of transcripts.
  std::vector<double> statistics(std::span<const Transcript> transcripts, std::span<const double> first_row) const;

  /// Full data path on given observations.
  Outcome run_exact(const Dataset& data, const SeedNode& coin, const SeedNode& rep) const;
  /// Samples the data from rep/data, coin from rep/coin.
  Outcome run_exact(const Signal& f, const SeedNode& rep) const;
  /// Statistic-level sampler, same law as run_exact.
  Outcome run_fast(const Signal& f, const SeedNode& rep) const;
  Outcome run(const Signal& f, const SeedNode& rep, EngineKind engine) const;

  /// OR over active subtests.
  static bool decide(const Outcome& outcome, std::span<const Threshold> thresholds);

 private:
  ProtocolKind kind_;
  ProblemConfig cfg_;
  T3Layout layout_;
  int bprime_ = 0;
};

/// Combined private-coin decision on a given dataset: T3.1 OR (active) T3.2
/// with the given per-subtest thresholds.
bool t3_decide_combined(const ProblemConfig& cfg, const Dataset& data, const SeedNode& rep,
                        std::span<const double> kappas);

}  // namespace distest
