#include "distest/infodiag.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "distest/parallel.hpp"
#include "distest/protocols.hpp"
#include "distest/stats.hpp"

namespace distest {

namespace {

double normal_quantile(double p) {
  double lo = -40.0;
  double hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (stats::normal_cdf(mid) < p) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct Accumulator {
  std::vector<double> sums;
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;
};

Eigen::MatrixXd xi_from(const Accumulator& acc, int d) {
  Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(d, d);
  if (acc.total == 0) return xi;
  const double n = static_cast<double>(acc.total);
  for (std::size_t y = 0; y < acc.counts.size(); ++y) {
    const std::int64_t c = acc.counts[y];
    if (c == 0) continue;
    const Eigen::Map<const Eigen::VectorXd> s(acc.sums.data() + y * d, d);
    // p_y mu_y mu_y^T = (c/n) (s/c)(s/c)^T
    xi.noalias() += (s * s.transpose()) / (static_cast<double>(c) * n);
  }
  return xi;
}

double lambda_max_of(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double batch_se(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(v.size() - 1);
  return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Constant: return "constant";
    case KernelKind::Sign: return "sign";
    case KernelKind::T1: return "T1";
    case KernelKind::T2: return "T2";
    case KernelKind::T32: return "T3.2";
    case KernelKind::Quantizer: return "quantizer";
  }
  return "?";
}

KernelKind parse_kernel(std::string_view text) {
  if (text == "constant") return KernelKind::Constant;
  if (text == "sign") return KernelKind::Sign;
  if (text == "T1") return KernelKind::T1;
  if (text == "T2") return KernelKind::T2;
  if (text == "T3.2") return KernelKind::T32;
  if (text == "quantizer") return KernelKind::Quantizer;
  throw ValidationError("unknown kernel '" + std::string(text) + "'");
}

EncodeKernel::EncodeKernel(KernelKind kind, const ProblemConfig& cfg, const SeedNode& coin, int bits_per_coord)
    : kind_(kind), cfg_(cfg) {
  validate_config(cfg_);
  switch (kind_) {
    case KernelKind::Constant: bits_ = 0; break;
    case KernelKind::Sign:
      coords_ = std::min(cfg_.b, cfg_.d);
      bits_ = coords_;
      break;
    case KernelKind::T1: bits_ = 1; break;
    case KernelKind::T2:
      coords_ = std::min(cfg_.b, cfg_.d);
      bits_ = coords_;
      frame_ = haar_frame(coords_, cfg_.d, coin);
      break;
    case KernelKind::T32:
      multiplicity_ = t32_multiplicity(cfg_.b, cfg_.d);
      applicable_ = multiplicity_ >= 1;
      bits_ = applicable_ ? t32_width(multiplicity_, cfg_.d) : 0;
      break;
    case KernelKind::Quantizer: {
      bits_per_coord_ = bits_per_coord > 0 ? bits_per_coord : std::max(1, cfg_.b / cfg_.d);
      coords_ = std::min(cfg_.d, cfg_.b / bits_per_coord_);
      applicable_ = coords_ >= 1;
      bits_ = coords_ * bits_per_coord_;
      const int cells = 1 << bits_per_coord_;
      const double sigma = cfg_.noise_sd();
      for (int t = 1; t < cells; ++t) edges_.push_back(sigma * normal_quantile(static_cast<double>(t) / cells));
      break;
    }
  }
  if (bits_ > kMaxDiagnosticBits) throw ValidationError("transcript alphabet too large for the diagnostic (b > 16)");
}

std::string EncodeKernel::label() const {
  std::string s(to_string(kind_));
  if (kind_ == KernelKind::Quantizer) s += "-" + std::to_string(bits_per_coord_);
  return s;
}

std::uint64_t EncodeKernel::encode(std::span<const double> x, RandomStream& rng) const {
  switch (kind_) {
    case KernelKind::Constant: return 0;
    case KernelKind::Sign: {
      std::uint64_t key = 0;
      for (int i = 0; i < coords_; ++i) key = (key << 1) | (x[i] > 0.0 ? 1u : 0u);
      return key;
    }
    case KernelKind::T1: return t1_encode(cfg_, x, rng).bit(0) ? 1 : 0;
    case KernelKind::T2: {
      const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
      const Eigen::VectorXd proj = frame_ * xv;
      std::uint64_t key = 0;
      for (int i = 0; i < coords_; ++i) key = (key << 1) | (proj[i] > 0.0 ? 1u : 0u);
      return key;
    }
    case KernelKind::T32: {
      const double scale = std::sqrt(cfg_.local_precision());
      std::int64_t total = 0;
      for (double v : x) total += rng.binomial(multiplicity_, std::erf(std::abs(scale * v) / std::numbers::sqrt2));
      return static_cast<std::uint64_t>(total);
    }
    case KernelKind::Quantizer: {
      std::uint64_t key = 0;
      for (int i = 0; i < coords_; ++i) {
        const auto cell = static_cast<std::uint64_t>(std::upper_bound(edges_.begin(), edges_.end(), x[i]) - edges_.begin());
        key = (key << bits_per_coord_) | cell;
      }
      return key;
    }
  }
  return 0;
}

std::vector<EncodeKernel> standard_kernels(const ProblemConfig& cfg, const SeedNode& coin) {
  std::vector<EncodeKernel> out;
  for (auto kind : {KernelKind::Constant, KernelKind::Sign, KernelKind::T1, KernelKind::T2, KernelKind::T32,
                    KernelKind::Quantizer}) {
    EncodeKernel k(kind, cfg, coin.child(to_string(kind)));
    if (k.applicable()) out.push_back(std::move(k));
  }
  return out;
}

XiEstimate estimate_xi(const EncodeKernel& kernel, const ProblemConfig& cfg, std::int64_t mc_samples,
                       const SeedNode& seed, int batches, int threads) {
  validate_config(cfg);
  if (!kernel.applicable()) throw ValidationError("kernel " + kernel.label() + " does not fit this (d, b)");
  if (kernel.bits() > kMaxDiagnosticBits) throw ValidationError("transcript alphabet too large for the diagnostic");
  if (mc_samples < batches || batches < 1) throw ValidationError("mc_samples must be >= number of batches");
  const int d = cfg.d;
  const std::size_t alphabet = std::size_t{1} << kernel.bits();
  const double sigma = cfg.noise_sd();

  std::vector<Accumulator> acc(static_cast<std::size_t>(batches));
  parallel_for(batches, threads, [&](std::int64_t bi) {
    auto& a = acc[bi];
    a.sums.assign(alphabet * d, 0.0);
    a.counts.assign(alphabet, 0);
    const std::int64_t count = mc_samples / batches + (bi < mc_samples % batches ? 1 : 0);
    auto rng = seed.child("batch", static_cast<std::uint64_t>(bi)).stream();
    std::vector<double> x(static_cast<std::size_t>(d));
    for (std::int64_t s = 0; s < count; ++s) {
      for (auto& v : x) v = sigma * rng.normal();
      const std::uint64_t y = kernel.encode(x, rng);
      if (y >= alphabet) throw std::logic_error("kernel emitted a key outside its alphabet");
      a.counts[y] += 1;
      for (int i = 0; i < d; ++i) a.sums[y * d + i] += x[i];
    }
    a.total = count;
  });

  Accumulator pooled;
  pooled.sums.assign(alphabet * d, 0.0);
  pooled.counts.assign(alphabet, 0);
  std::vector<double> traces;
  std::vector<double> lambdas;
  for (const auto& a : acc) {
    for (std::size_t k = 0; k < a.sums.size(); ++k) pooled.sums[k] += a.sums[k];
    for (std::size_t k = 0; k < a.counts.size(); ++k) pooled.counts[k] += a.counts[k];
    pooled.total += a.total;
    const Eigen::MatrixXd xb = xi_from(a, d);
    traces.push_back(xb.trace());
    lambdas.push_back(lambda_max_of(xb));
  }

  XiEstimate est;
  est.kernel = kernel.label();
  est.per_machine = xi_from(pooled, d);
  est.matrix = static_cast<double>(cfg.m) * est.per_machine;
  est.per_machine_trace = est.per_machine.trace();
  est.trace = est.matrix.trace();
  est.lambda_max = lambda_max_of(est.per_machine);
  est.trace_se = batch_se(traces);
  est.lambda_se = batch_se(lambdas);
  est.mc_samples = pooled.total;
  est.alphabet_size = static_cast<std::int64_t>(alphabet);
  est.groups_observed = std::count_if(pooled.counts.begin(), pooled.counts.end(), [](auto c) { return c > 0; });
  return est;
}

DpiReport check_dpi(const XiEstimate& est, const ProblemConfig& cfg, double sigmas) {
  validate_config(cfg);
  const double m = cfg.m;
  const double n = static_cast<double>(cfg.n);
  const double d = cfg.d;
  const double b = cfg.b;
  DpiReport r;
  r.kernel = est.kernel;
  r.trace = est.trace;
  r.trace_bound = std::min(2.0 * std::numbers::ln2 * b / d, 1.0) * m * m * d / n;
  r.trace_slack = sigmas * m * est.trace_se;
  r.lambda_max = est.lambda_max;
  r.lambda_bound = m / n;
  r.lambda_slack = sigmas * est.lambda_se;
  r.per_machine_trace = est.per_machine_trace;
  r.per_machine_trace_bound = 2.0 * std::numbers::ln2 * (m / n) * b;
  r.trace_ok = r.trace <= r.trace_bound + r.trace_slack;
  r.lambda_ok = r.lambda_max <= r.lambda_bound + r.lambda_slack;
  r.per_machine_ok = r.per_machine_trace <= r.per_machine_trace_bound + sigmas * est.trace_se;
  return r;
}

}  // namespace distest
