#include "distest/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "distest/stats.hpp"

namespace distest {

namespace {

void require_bits(std::span<const Transcript> transcripts, std::size_t bits, std::string_view who) {
  for (const auto& t : transcripts) {
    if (t.bit_count() != bits) {
      throw ValidationError(std::string(who) + ": expected " + std::to_string(bits) + "-bit transcripts, got " +
                            std::to_string(t.bit_count()));
    }
  }
}

}  // namespace

std::string_view protocol_name(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::T1: return "T1";
    case ProtocolKind::T1Local: return "T1-local";
    case ProtocolKind::T2: return "T2";
    case ProtocolKind::T3: return "T3";
  }
  return "?";
}

ProtocolKind parse_protocol(std::string_view name) {
  if (name == "T1") return ProtocolKind::T1;
  if (name == "T1-local") return ProtocolKind::T1Local;
  if (name == "T2") return ProtocolKind::T2;
  if (name == "T3") return ProtocolKind::T3;
  throw ValidationError("unknown protocol '" + std::string(name) + "' (expected T1, T1-local, T2, T3 or auto)");
}

ProtocolKind choose_protocol(const ProblemConfig& cfg, const ProtocolOptions& opts) {
  validate_config(cfg);
  if (cfg.m <= opts.small_m_cutoff) return ProtocolKind::T1Local;
  const double m = cfg.m;
  const double b = cfg.b;
  const double d = cfg.d;
  if (cfg.coin == Coin::Public) return m * b >= d ? ProtocolKind::T2 : ProtocolKind::T1;
  return m * b * b >= d * d ? ProtocolKind::T3 : ProtocolKind::T1;
}

ProtocolKind resolve_protocol(std::string_view name, const ProblemConfig& cfg, const ProtocolOptions& opts) {
  if (name == "auto") return choose_protocol(cfg, opts);
  return parse_protocol(name);
}

// ---------------------------------------------------------------- T1

double t1_local_chi2(const ProblemConfig& cfg, std::span<const double> x) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return cfg.local_precision() * sq;
}

Transcript t1_encode(const ProblemConfig& cfg, std::span<const double> x, RandomStream& rng) {
  const double p = stats::chi2_cdf(cfg.d, t1_local_chi2(cfg, x));
  Transcript t;
  t.push_bit(bernoulli(p, rng));
  return t;
}

double t1_statistic_from_count(std::int64_t ones, std::int64_t m) {
  // ((2k - m)^2 - m) / (4m), evaluated on integers so equal counts give equal atoms
  const std::int64_t dev = 2 * ones - m;
  const std::int64_t num = dev * dev - m;
  return std::abs(static_cast<double>(num)) / (4.0 * static_cast<double>(m));
}

double t1_statistic(std::span<const Transcript> transcripts) {
  require_bits(transcripts, 1, "T1");
  std::int64_t ones = 0;
  for (const auto& t : transcripts) ones += t.bit(0) ? 1 : 0;
  return t1_statistic_from_count(ones, static_cast<std::int64_t>(transcripts.size()));
}

bool t1_decide(std::span<const Transcript> transcripts, double kappa) { return t1_statistic(transcripts) >= kappa; }

double t1_local_statistic(const ProblemConfig& cfg, std::span<const double> x1) {
  const double d = cfg.d;
  return (t1_local_chi2(cfg, x1) - d) / std::sqrt(d);
}

bool t1_local_decide(const ProblemConfig& cfg, std::span<const double> x1, double kappa) {
  return t1_local_statistic(cfg, x1) >= kappa;
}

// ---------------------------------------------------------------- T2

int t2_bits(const ProblemConfig& cfg) { return std::min(cfg.b, cfg.d); }

Transcript t2_encode(const ProblemConfig& cfg, std::span<const double> x, const Eigen::MatrixXd& coin_rows) {
  const int bprime = t2_bits(cfg);
  if (coin_rows.cols() != static_cast<Eigen::Index>(x.size()) || coin_rows.rows() < bprime) {
    throw ValidationError("T2 coin does not match the observation dimension / bit budget");
  }
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  Transcript t;
  for (int i = 0; i < bprime; ++i) t.push_bit(coin_rows.row(i).dot(xv) > 0.0);
  return t;
}

Transcript t2_encode(const ProblemConfig& cfg, std::span<const double> x, const OrthogonalMatrix& coin) {
  // U = Q^T, so row i of U is column i of Q; matches haar_frame on the same node
  return t2_encode(cfg, x, Eigen::MatrixXd(coin.entries().transpose()));
}

double t2_statistic_from_counts(std::span<const std::int64_t> counts, std::int64_t m) {
  const auto bprime = static_cast<std::int64_t>(counts.size());
  std::int64_t sum = 0;
  for (std::int64_t s : counts) {
    const std::int64_t dev = 2 * s - m;
    sum += dev * dev;
  }
  const std::int64_t num = sum - bprime * m;
  return std::abs(static_cast<double>(num)) / (4.0 * std::sqrt(static_cast<double>(bprime)) * static_cast<double>(m));
}

double t2_statistic(std::span<const Transcript> transcripts, int m, int bprime) {
  if (static_cast<int>(transcripts.size()) != m) throw ValidationError("T2: expected one transcript per machine");
  require_bits(transcripts, static_cast<std::size_t>(bprime), "T2");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(bprime), 0);
  for (const auto& t : transcripts)
    for (int i = 0; i < bprime; ++i) counts[i] += t.bit(i) ? 1 : 0;
  return t2_statistic_from_counts(counts, m);
}

bool t2_decide(std::span<const Transcript> transcripts, int m, int bprime, double kappa) {
  return t2_statistic(transcripts, m, bprime) > kappa;
}

// ---------------------------------------------------------------- T3

int PartitionPlan::min_set_size() const {
  return static_cast<int>(total_slots() / d);
}

PartitionPlan build_partition(int m, int d, int bprime) {
  if (m < 1 || d < 1 || bprime < 1) throw ValidationError("partition requires m, d, b' >= 1");
  if (bprime > d) throw ValidationError("partition requires b' <= d");
  if (static_cast<std::int64_t>(m) * bprime < d) {
    throw InfeasibleError("insufficient total budget for partition: m*b' = " +
                          std::to_string(static_cast<std::int64_t>(m) * bprime) + " < d = " + std::to_string(d));
  }
  PartitionPlan plan;
  plan.m = m;
  plan.d = d;
  plan.bprime = bprime;
  plan.sets.resize(static_cast<std::size_t>(d));
  plan.coords.resize(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    const std::int64_t start = static_cast<std::int64_t>(j) * bprime;
    for (int t = 0; t < bprime; ++t) {
      const int i = static_cast<int>((start + t) % d);
      plan.coords[j].push_back(i);
      plan.sets[i].push_back(j);
    }
  }
  return plan;
}

Transcript t31_encode(int j, std::span<const double> x, const PartitionPlan& plan) {
  if (j < 0 || j >= plan.m || static_cast<int>(x.size()) != plan.d) {
    throw ValidationError("T3.1: machine index or observation dimension does not match the plan");
  }
  Transcript t;
  for (int i : plan.coords[j]) t.push_bit(x[i] > 0.0);
  return t;
}

double t31_statistic_from_counts(std::span<const std::int64_t> ones_per_coord, const PartitionPlan& plan) {
  if (static_cast<int>(ones_per_coord.size()) != plan.d) throw ValidationError("T3.1: one count per coordinate required");
  std::int64_t sum = 0;
  for (int i = 0; i < plan.d; ++i) {
    const std::int64_t dev = 2 * ones_per_coord[i] - static_cast<std::int64_t>(plan.sets[i].size());
    sum += dev * dev;
  }
  // E_0 sum_i (2K_i - |I_i|)^2 = sum_i |I_i| = m b'; equals |I_1| d when the split is even
  const std::int64_t num = sum - plan.total_slots();
  const double scale = 4.0 * plan.min_set_size() * std::sqrt(static_cast<double>(plan.d));
  return std::abs(static_cast<double>(num)) / scale;
}

double t31_statistic(std::span<const Transcript> transcripts, const PartitionPlan& plan) {
  if (static_cast<int>(transcripts.size()) != plan.m) throw ValidationError("T3.1: expected one transcript per machine");
  std::vector<std::int64_t> ones(static_cast<std::size_t>(plan.d), 0);
  for (int j = 0; j < plan.m; ++j) {
    const auto& coords = plan.coords[j];
    if (transcripts[j].bit_count() != coords.size()) throw ValidationError("T3.1: transcript size does not match the plan");
    for (std::size_t k = 0; k < coords.size(); ++k) ones[coords[k]] += transcripts[j].bit(k) ? 1 : 0;
  }
  return t31_statistic_from_counts(ones, plan);
}

bool t31_decide(std::span<const Transcript> transcripts, const PartitionPlan& plan, double kappa) {
  return t31_statistic(transcripts, plan) > kappa;
}

std::int64_t t32_multiplicity(int budget, std::int64_t d) {
  if (budget < 0 || d < 1) return 0;
  if (budget >= 62) return std::int64_t{1} << 40;  // far beyond any width we can address
  return (std::int64_t{1} << budget) / (d + 1);
}

int t32_width(std::int64_t multiplicity, std::int64_t d) {
  const std::int64_t max_value = multiplicity * d;
  int width = 0;
  while (width < 63 && (std::int64_t{1} << width) < max_value + 1) ++width;
  return width;
}

bool t32_budget_predicate(int b, std::int64_t d) {
  return static_cast<double>(b) >= 2.0 * std::log2(static_cast<double>(d) + 1.0);
}

Transcript t32_encode(const ProblemConfig& cfg, std::span<const double> x, int budget, RandomStream& rng) {
  const auto d = static_cast<std::int64_t>(x.size());
  const std::int64_t c = t32_multiplicity(budget, d);
  if (c < 1) throw InfeasibleError("T3.2: budget too small for C_{b,d} >= 1");
  const double scale = std::sqrt(cfg.local_precision());
  std::int64_t total = 0;
  for (double xi : x) {
    // F_{chi2_1}(z^2) = P(|Z| <= |z|) = erf(|z| / sqrt 2)
    const double q = std::erf(std::abs(scale * xi) / std::numbers::sqrt2);
    total += rng.binomial(c, q);
  }
  Transcript t;
  t.push_uint(static_cast<std::uint64_t>(total), t32_width(c, d));
  return t;
}

double t32_statistic_from_total(std::int64_t total, std::int64_t m, std::int64_t d, std::int64_t multiplicity) {
  const __int128 mcd = static_cast<__int128>(m) * multiplicity * d;
  const __int128 dev = 2 * static_cast<__int128>(total) - mcd;
  const __int128 num = dev * dev - mcd;
  const double denom = 4.0 * static_cast<double>(mcd);
  return std::abs(static_cast<double>(num)) / denom;
}

double t32_statistic(std::span<const Transcript> transcripts, std::int64_t d, std::int64_t multiplicity) {
  const int width = t32_width(multiplicity, d);
  std::int64_t total = 0;
  for (const auto& t : transcripts) {
    if (static_cast<int>(t.bit_count()) != width) throw ValidationError("T3.2: transcript width mismatch");
    total += static_cast<std::int64_t>(t.read_uint(0, width));
  }
  return t32_statistic_from_total(total, static_cast<std::int64_t>(transcripts.size()), d, multiplicity);
}

bool t32_decide(std::span<const Transcript> transcripts, std::int64_t d, std::int64_t multiplicity, double kappa) {
  return t32_statistic(transcripts, d, multiplicity) >= kappa;
}

T3Layout t3_layout(const ProblemConfig& cfg) {
  T3Layout layout;
  const int half = cfg.b / 2;
  const std::int64_t c = t32_multiplicity(half, cfg.d);
  layout.second_active = t32_budget_predicate(cfg.b, cfg.d) && c >= 1;
  if (layout.second_active) {
    layout.budget_first = half;
    layout.budget_second = half;
    layout.multiplicity = c;
    layout.width_second = t32_width(c, cfg.d);
  } else {
    layout.budget_first = cfg.b;
  }
  layout.plan = build_partition(cfg.m, cfg.d, std::min(layout.budget_first, cfg.d));
  return layout;
}

bool t3_decide_combined(bool first_rejects, bool second_rejects, const T3Layout& layout) {
  return first_rejects || (layout.second_active && second_rejects);
}

}  // namespace distest
