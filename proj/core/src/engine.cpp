#include "distest/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <thread>

#include "distest/parallel.hpp"
#include "distest/stats.hpp"

namespace distest {

namespace {

std::atomic<int> g_default_threads{0};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// S = ||f/sigma + Z||^2 in law: noncentral chi-square with d dof and
// noncentrality lambda, drawn as (Z_1 + sqrt(lambda))^2 + chi2_{d-1}.
double noncentral_chi2(int d, double lambda, RandomStream& rng) {
  const double z = rng.normal() + std::sqrt(lambda);
  double s = z * z;
  if (d > 1) s += rng.chi_square(d - 1);
  return s;
}

}  // namespace

int default_threads() {
  const int t = g_default_threads.load();
  if (t > 0) return t;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_default_threads(int threads) { g_default_threads.store(std::max(0, threads)); }

std::string_view to_string(EngineKind engine) { return engine == EngineKind::Exact ? "exact" : "fast"; }

EngineKind parse_engine(std::string_view text) {
  if (text == "exact") return EngineKind::Exact;
  if (text == "fast") return EngineKind::Fast;
  throw ValidationError("engine must be 'exact' or 'fast'");
}

bool same_atom(double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b)) return a == b;
  return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

bool Threshold::rejects(double stat, double u) const {
  if (std::isnan(stat)) return false;
  if (same_atom(stat, boundary)) return u < boundary_prob;
  return stat >= kappa || same_atom(stat, kappa);
}

TestProtocol::TestProtocol(ProtocolKind kind, const ProblemConfig& cfg) : kind_(kind), cfg_(cfg) {
  validate_config(cfg_);
  if (kind_ == ProtocolKind::T2) {
    if (cfg_.coin != Coin::Public) throw ValidationError("T2 requires a public coin");
    bprime_ = t2_bits(cfg_);
  }
  if (kind_ == ProtocolKind::T3) layout_ = distest::t3_layout(cfg_);
}

int TestProtocol::bits_per_machine() const {
  switch (kind_) {
    case ProtocolKind::T1:
    case ProtocolKind::T1Local: return 1;
    case ProtocolKind::T2: return bprime_;
    case ProtocolKind::T3: {
      int bits = layout_.plan.bprime;
      if (layout_.second_active) bits += layout_.width_second;
      return bits;
    }
  }
  return 0;
}

Transcript TestProtocol::encode(int j, std::span<const double> x, const SeedNode& coin, const SeedNode& rep) const {
  auto rng = rep.child("encode").child("machine", static_cast<std::uint64_t>(j)).stream();
  switch (kind_) {
    case ProtocolKind::T1: return t1_encode(cfg_, x, rng);
    case ProtocolKind::T1Local: {
      // machine 1 evaluates the chi-square statistic locally; the center only
      // needs its one-bit decision, which it reproduces from the statistic
      Transcript t;
      if (j == 0) t.push_bit(false);
      return t;
    }
    case ProtocolKind::T2: {
      const Eigen::MatrixXd frame = haar_frame(bprime_, cfg_.d, coin);
      return t2_encode(cfg_, x, frame);
    }
    case ProtocolKind::T3: {
      Transcript t = t31_encode(j, x, layout_.plan);
      if (layout_.second_active) {
        const Transcript second = t32_encode(cfg_, x, layout_.budget_second, rng);
        for (std::size_t i = 0; i < second.bit_count(); ++i) t.push_bit(second.bit(i));
      }
      return t;
    }
  }
  return {};
}

std::vector<double> TestProtocol::statistics(std::span<const Transcript> transcripts,
                                             std::span<const double> first_row) const {
  switch (kind_) {
    case ProtocolKind::T1: return {t1_statistic(transcripts)};
    case ProtocolKind::T1Local: return {t1_local_statistic(cfg_, first_row)};
    case ProtocolKind::T2: return {t2_statistic(transcripts, cfg_.m, bprime_)};
    case ProtocolKind::T3: {
      const auto& plan = layout_.plan;
      std::vector<std::int64_t> ones(static_cast<std::size_t>(cfg_.d), 0);
      std::int64_t total = 0;
      for (int j = 0; j < cfg_.m; ++j) {
        const auto& t = transcripts[j];
        const auto& coords = plan.coords[j];
        const std::size_t expected = coords.size() + (layout_.second_active ? layout_.width_second : 0);
        if (t.bit_count() != expected) throw ValidationError("T3: transcript size does not match the layout");
        for (std::size_t k = 0; k < coords.size(); ++k) ones[coords[k]] += t.bit(k) ? 1 : 0;
        if (layout_.second_active) total += static_cast<std::int64_t>(t.read_uint(coords.size(), layout_.width_second));
      }
      const double second =
          layout_.second_active ? t32_statistic_from_total(total, cfg_.m, cfg_.d, layout_.multiplicity) : kNaN;
      return {t31_statistic_from_counts(ones, plan), second};
    }
  }
  return {};
}

Outcome TestProtocol::run_exact(const Dataset& data, const SeedNode& coin, const SeedNode& rep) const {
  if (data.machines() != cfg_.m || data.dim() != cfg_.d) throw ValidationError("dataset shape does not match config");
  Outcome out;
  out.transcripts.reserve(static_cast<std::size_t>(cfg_.m));
  if (kind_ == ProtocolKind::T2) {
    // one rotation per replication, shared by every machine
    const Eigen::MatrixXd frame = haar_frame(bprime_, cfg_.d, coin);
    for (int j = 0; j < cfg_.m; ++j) out.transcripts.push_back(t2_encode(cfg_, data.row(j), frame));
  } else {
    for (int j = 0; j < cfg_.m; ++j) out.transcripts.push_back(encode(j, data.row(j), coin, rep));
  }
  for (const auto& t : out.transcripts)
    out.max_bits = std::max<std::int64_t>(out.max_bits, static_cast<std::int64_t>(t.bit_count()));
  out.stats = statistics(out.transcripts, data.row(0));
  out.tie_u = rep.child("central").stream().uniform();
  return out;
}

Outcome TestProtocol::run_exact(const Signal& f, const SeedNode& rep) const {
  const Dataset data = sample_observations(cfg_, f, rep.child("data"));
  return run_exact(data, rep.child("coin"), rep);
}

Outcome TestProtocol::run_fast(const Signal& f, const SeedNode& rep) const {
  if (f.size() != cfg_.d) throw ValidationError("signal length does not match d");
  auto rng = rep.child("fast").stream();
  const double precision = cfg_.local_precision();
  const double sigma = cfg_.noise_sd();
  const double lambda = precision * f.squared_norm();
  Outcome out;
  switch (kind_) {
    case ProtocolKind::T1: {
      std::int64_t ones = 0;
      for (int j = 0; j < cfg_.m; ++j) {
        const double s = noncentral_chi2(cfg_.d, lambda, rng);
        ones += bernoulli(stats::chi2_cdf(cfg_.d, s), rng) ? 1 : 0;
      }
      out.stats = {t1_statistic_from_count(ones, cfg_.m)};
      break;
    }
    case ProtocolKind::T1Local: {
      const double s = noncentral_chi2(cfg_.d, lambda, rng);
      out.stats = {(s - cfg_.d) / std::sqrt(static_cast<double>(cfg_.d))};
      break;
    }
    case ProtocolKind::T2: {
      // Uf is uniform on the sphere of radius ||f||; only its first b' coordinates matter
      std::vector<double> g(static_cast<std::size_t>(bprime_));
      double sq = 0.0;
      for (auto& v : g) {
        v = rng.normal();
        sq += v * v;
      }
      if (cfg_.d > bprime_) sq += rng.chi_square(cfg_.d - bprime_);
      const double scale = f.l2_norm() / std::sqrt(sq);
      std::vector<std::int64_t> counts(g.size());
      for (std::size_t i = 0; i < g.size(); ++i)
        counts[i] = rng.binomial(cfg_.m, stats::normal_cdf(scale * g[i] / sigma));
      out.stats = {t2_statistic_from_counts(counts, cfg_.m)};
      break;
    }
    case ProtocolKind::T3: {
      const auto& plan = layout_.plan;
      std::vector<std::int64_t> ones(static_cast<std::size_t>(cfg_.d), 0);
      double second = kNaN;
      if (layout_.second_active) {
        // both subtests read the same coordinates, so draw each once
        std::vector<char> assigned(static_cast<std::size_t>(cfg_.m) * cfg_.d, 0);
        for (int j = 0; j < cfg_.m; ++j)
          for (int i : plan.coords[j]) assigned[static_cast<std::size_t>(j) * cfg_.d + i] = 1;
        std::int64_t total = 0;
        for (int j = 0; j < cfg_.m; ++j) {
          for (int i = 0; i < cfg_.d; ++i) {
            const double x = f[i] + sigma * rng.normal();
            if (assigned[static_cast<std::size_t>(j) * cfg_.d + i] && x > 0.0) ++ones[i];
            const double q = std::erf(std::abs(x / sigma) / std::numbers::sqrt2);
            total += rng.binomial(layout_.multiplicity, q);
          }
        }
        second = t32_statistic_from_total(total, cfg_.m, cfg_.d, layout_.multiplicity);
      } else {
        for (int i = 0; i < cfg_.d; ++i)
          ones[i] = rng.binomial(static_cast<std::int64_t>(plan.sets[i].size()), stats::normal_cdf(f[i] / sigma));
      }
      out.stats = {t31_statistic_from_counts(ones, plan), second};
      break;
    }
  }
  // no transcripts are materialized; report the layout's declared width
  out.max_bits = bits_per_machine();
  out.tie_u = rep.child("central").stream().uniform();
  return out;
}

Outcome TestProtocol::run(const Signal& f, const SeedNode& rep, EngineKind engine) const {
  return engine == EngineKind::Exact ? run_exact(f, rep) : run_fast(f, rep);
}

bool TestProtocol::decide(const Outcome& outcome, std::span<const Threshold> thresholds) {
  if (thresholds.size() < outcome.stats.size()) throw ValidationError("missing threshold for a subtest");
  for (std::size_t k = 0; k < outcome.stats.size(); ++k)
    if (thresholds[k].rejects(outcome.stats[k], outcome.tie_u)) return true;
  return false;
}

bool t3_decide_combined(const ProblemConfig& cfg, const Dataset& data, const SeedNode& rep,
                        std::span<const double> kappas) {
  const TestProtocol proto(ProtocolKind::T3, cfg);
  const Outcome out = proto.run_exact(data, rep.child("coin"), rep);
  if (kappas.empty()) throw ValidationError("T3 needs at least one threshold");
  const bool r1 = out.stats[0] > kappas[0];
  bool r2 = false;
  if (proto.t3_layout().second_active) {
    if (kappas.size() < 2) throw ValidationError("T3.2 is active and needs a second threshold");
    r2 = out.stats[1] >= kappas[1];
  }
  return t3_decide_combined(r1, r2, proto.t3_layout());
}

}  // namespace distest
