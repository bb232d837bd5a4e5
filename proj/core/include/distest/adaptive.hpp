#pragma once

// Tests that adapt to unknown smoothness: one finite-dimensional test per
// resolution level in a grid, run on disjoint-ish machine subsets and
// combined through a max with an inflated threshold.

#include <cstdint>
#include <map>
#include <vector>

#include "distest/nonparametric.hpp"

namespace distest {

/// Squared adaptive separation rate with constant one. log n is taken base 2;
/// b >= log2 n and b < log2 n select the two budget families.
double adaptive_rate(double n, double m, double b, double s, Coin coin);

/// log log n (natural logs), floored at a small positive value.
double log_log(double n);

struct AdaptiveGrid {
  double s_min = 0.0;
  double s_max = 0.0;
  std::int64_t n = 1;
  int m = 1;
  int b = 1;
  Coin coin = Coin::Private;
  /// L_min..L_max, ascending and contiguous.
  std::vector<int> levels;
  /// Smoothness grid and the level each point maps to.
  std::vector<double> s_values;
  std::vector<int> level_of_s;
  /// Adaptive rate rho_s (not squared) of the first grid point mapping to each level.
  std::map<int, double> rho_map;

  /// L_s for a smoothness in [s_min, s_max], from the adaptive rate.
  int level_for(double s) const;
  double rho_for(double s) const;
  std::size_t size() const { return levels.size(); }
};

AdaptiveGrid build_grid(double s_min, double s_max, std::int64_t n, int m, int b, Coin coin);

struct MachineSchedule {
  std::vector<int> levels;
  /// subsets[k] = M_L for L = levels[k], ascending machine indices.
  std::vector<std::vector<int>> subsets;
  int mprime = 0;
  /// Per-level bit budget b' for the high-budget tests.
  std::vector<int> level_bits;
  /// memberships[j] = number of subsets machine j belongs to.
  std::vector<int> memberships;
};

/// floor(m min(log2 n, b) / log2 n), clamped to 1 when m b >= log2 n.
int adaptive_mprime(std::int64_t n, int m, int b);

/// Round-robin blocks of m' consecutive machines (mod m) per level.
/// Throws InfeasibleError when m b < log2 n or m'|C| > m b.
MachineSchedule build_schedule(std::int64_t n, int m, int b, const AdaptiveGrid& grid);

struct AdaptiveOptions {
  /// Threshold constant c in c sqrt(log log n) for the sign-bit tests.
  double threshold_constant = 2.0;
  /// kappa in kappa sqrt(log log n) for the counting subtest.
  double kappa_second = 2.0;
  /// Counting subtest runs at level L when 2 log2(nu_L + 1) <= b' (default)
  /// or, with level_predicate, when 2 log2(L) <= b'.
  bool level_predicate = false;
};

/// Per-level statistics of one replication. NaN marks a skipped level.
struct AdaptiveOutcome {
  std::vector<int> levels;
  std::vector<double> s1;        ///< S_I(L)
  std::vector<double> s_public;  ///< S_II(L), public coin
  std::vector<double> s31;       ///< S^{III,1}(L), private coin
  std::vector<double> s32;       ///< S^{III,2}(L), private coin
  /// Largest per-machine bit count of each subtest construction.
  std::int64_t bits_t1 = 0;
  std::int64_t bits_t2 = 0;
  std::int64_t bits_t3 = 0;
};

/// Layout of the private-coin high-budget subtests at one level.
struct AdaptiveLevelLayout {
  int level = 0;
  std::int64_t nu = 0;
  int budget = 0;
  bool first_active = false;
  bool second_active = false;
  int budget_first = 0;
  int budget_second = 0;
  std::int64_t multiplicity = 0;
  int width_second = 0;
  PartitionPlan plan;  ///< over local indices 0..m'-1 of M_L
};

class AdaptiveTest {
 public:
  /// cfg.d is ignored; observations have dimension nu_{L_max}.
  AdaptiveTest(const ProblemConfig& cfg, double s_min, double s_max, const AdaptiveOptions& opts = {});

  const ProblemConfig& config() const { return cfg_; }
  const AdaptiveGrid& grid() const { return grid_; }
  const MachineSchedule& schedule() const { return schedule_; }
  const std::vector<AdaptiveLevelLayout>& private_layout() const { return layout_; }
  const AdaptiveOptions& options() const { return opts_; }
  double threshold() const;
  double threshold_second() const;

  AdaptiveOutcome run(const LeveledSignal& f, const SeedNode& rep) const;

  bool t1_decide(const AdaptiveOutcome& out) const;
  bool t2_decide(const AdaptiveOutcome& out) const;
  bool t31_decide(const AdaptiveOutcome& out) const;
  bool t32_decide(const AdaptiveOutcome& out) const;
  bool t3_decide(const AdaptiveOutcome& out) const;
  /// Public: T_I OR T_II. Private: T_I OR T_III.
  bool combined_decide(const AdaptiveOutcome& out) const;

  /// Null (1 - alpha) quantile of max_L S^{III,2}(L) / sqrt(log log n); NaN
  /// when no level is eligible.
  double calibrate_kappa_second(std::int64_t null_reps, const SeedNode& seed, int threads = 0) const;
  void set_kappa_second(double kappa) { opts_.kappa_second = kappa; }

 private:
  ProblemConfig cfg_;
  AdaptiveOptions opts_;
  AdaptiveGrid grid_;
  MachineSchedule schedule_;
  std::vector<AdaptiveLevelLayout> layout_;
};

bool t1_adapt(const AdaptiveTest& test, const LeveledSignal& f, const SeedNode& rep);
bool t2_adapt(const AdaptiveTest& test, const LeveledSignal& f, const SeedNode& rep);
bool t3_adapt(const AdaptiveTest& test, const LeveledSignal& f, const SeedNode& rep);

}  // namespace distest
