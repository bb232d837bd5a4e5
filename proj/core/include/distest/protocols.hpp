#pragma once

// One-shot distributed tests: local encoders that compress an observation
// into a b-bit transcript and central statistics computed from transcripts.
//
//   T1        1 bit per machine, Bernoulli of the local chi-square cdf value
//   T1-local  single-machine chi-square test, used when m is small
//   T2        public coin: sign bits of a shared random rotation
//   T3        private coin: coordinate sign bits on a partition (T3.1),
//             OR-ed with a counted chi-square(1) Bernoulli test (T3.2)

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distest/model.hpp"
#include "distest/randomness.hpp"

namespace distest {

enum class ProtocolKind { T1, T1Local, T2, T3 };

std::string_view protocol_name(ProtocolKind kind);
/// Accepts "T1", "T1-local", "T2", "T3". "auto" is resolved by resolve_protocol.
ProtocolKind parse_protocol(std::string_view name);

struct ProtocolOptions {
  /// Machine counts m <= small_m_cutoff fall back to the single-machine test.
  int small_m_cutoff = 16;
};

/// Public coin: T2 if m b >= d else T1. Private coin: T3 if m b^2 >= d^2
/// else T1. Either mode uses T1-local when m <= small_m_cutoff.
ProtocolKind choose_protocol(const ProblemConfig& cfg, const ProtocolOptions& opts = {});
ProtocolKind resolve_protocol(std::string_view name, const ProblemConfig& cfg, const ProtocolOptions& opts = {});

// ---------------------------------------------------------------- T1

/// S = (n/m) ||x||^2, the local chi-square statistic.
double t1_local_chi2(const ProblemConfig& cfg, std::span<const double> x);
/// One bit: Y ~ Ber(F_{chi2_d}(S)).
Transcript t1_encode(const ProblemConfig& cfg, std::span<const double> x, RandomStream& rng);
/// |(1/m)(sum_j (Y_j - 1/2))^2 - 1/4| from the number of ones.
double t1_statistic_from_count(std::int64_t ones, std::int64_t m);
double t1_statistic(std::span<const Transcript> transcripts);
bool t1_decide(std::span<const Transcript> transcripts, double kappa);

/// (S - d) / sqrt(d) on machine 1.
double t1_local_statistic(const ProblemConfig& cfg, std::span<const double> x1);
bool t1_local_decide(const ProblemConfig& cfg, std::span<const double> x1, double kappa);

// ---------------------------------------------------------------- T2

/// Bits sent per machine: min(b, d).
int t2_bits(const ProblemConfig& cfg);
/// Bit i = 1{(U x)_i > 0} for the first min(b, d) rows of the shared rotation.
Transcript t2_encode(const ProblemConfig& cfg, std::span<const double> x, const OrthogonalMatrix& coin);
/// Same, with the coin given as a frame of (at least) min(b, d) orthonormal rows.
Transcript t2_encode(const ProblemConfig& cfg, std::span<const double> x, const Eigen::MatrixXd& coin_rows);
/// |(1/(sqrt(b') m)) sum_i (S_i - m/2)^2 - sqrt(b')/4| from per-coordinate counts S_i.
double t2_statistic_from_counts(std::span<const std::int64_t> counts, std::int64_t m);
double t2_statistic(std::span<const Transcript> transcripts, int m, int bprime);
bool t2_decide(std::span<const Transcript> transcripts, int m, int bprime, double kappa);

// ---------------------------------------------------------------- T3

/// Assignment of machines to coordinates. sets[i] lists the machines that
/// report coordinate i; coords[j] lists the coordinates machine j reports.
struct PartitionPlan {
  int m = 0;
  int d = 0;
  int bprime = 0;
  std::vector<std::vector<int>> sets;
  std::vector<std::vector<int>> coords;

  /// floor(m b' / d), the guaranteed minimum set size.
  int min_set_size() const;
  std::int64_t total_slots() const { return static_cast<std::int64_t>(m) * bprime; }
};

/// Round-robin: machine j covers coordinates (j b' + t) mod d, t < b'.
PartitionPlan build_partition(int m, int d, int bprime);

/// One sign bit 1{x_i > 0} per coordinate assigned to machine j.
Transcript t31_encode(int j, std::span<const double> x, const PartitionPlan& plan);
/// |(1/(|I_1| sqrt d)) sum_i (sum_{j in I_i} (Y - 1/2))^2 - sqrt(d)/4|, with
/// the centring term taken as the exact null mean when set sizes differ.
double t31_statistic_from_counts(std::span<const std::int64_t> ones_per_coord, const PartitionPlan& plan);
double t31_statistic(std::span<const Transcript> transcripts, const PartitionPlan& plan);
bool t31_decide(std::span<const Transcript> transcripts, const PartitionPlan& plan, double kappa);

/// C_{b,d} = floor(2^b / (d + 1)); saturates instead of overflowing.
std::int64_t t32_multiplicity(int budget, std::int64_t d);
/// ceil(log2(C d + 1)).
int t32_width(std::int64_t multiplicity, std::int64_t d);
/// True when 2 log2(d + 1) <= b.
bool t32_budget_predicate(int b, std::int64_t d);
/// N = sum_{l <= C} sum_i B_li with B_li ~ Ber(F_{chi2_1}((n/m) x_i^2)),
/// written in t32_width(C, d) bits. Throws if C < 1.
Transcript t32_encode(const ProblemConfig& cfg, std::span<const double> x, int budget, RandomStream& rng);
/// |(1/(d m C)) (sum_j N_j - m C d / 2)^2 - 1/4| from the total sum_j N_j.
double t32_statistic_from_total(std::int64_t total, std::int64_t m, std::int64_t d, std::int64_t multiplicity);
double t32_statistic(std::span<const Transcript> transcripts, std::int64_t d, std::int64_t multiplicity);
bool t32_decide(std::span<const Transcript> transcripts, std::int64_t d, std::int64_t multiplicity, double kappa);

/// How T3 splits its budget between its two subtests.
struct T3Layout {
  bool second_active = false;
  int budget_first = 0;   ///< bits per machine for T3.1 (b' = min(budget, d))
  int budget_second = 0;  ///< bits per machine for T3.2
  std::int64_t multiplicity = 0;
  int width_second = 0;
  PartitionPlan plan;
};

/// Both subtests at floor(b/2) bits each when 2 log2(d+1) <= b and
/// C_{floor(b/2),d} >= 1, otherwise T3.1 alone at budget b.
T3Layout t3_layout(const ProblemConfig& cfg);

/// OR of the two subtest decisions; the second is ignored when inactive.
bool t3_decide_combined(bool first_rejects, bool second_rejects, const T3Layout& layout);

}  // namespace distest
