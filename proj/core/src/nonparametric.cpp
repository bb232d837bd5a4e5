#include "distest/nonparametric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace distest {

namespace {

constexpr int kMaxLevel = 24;

void check_level(int L) {
  if (L < 0 || L > kMaxLevel) throw ValidationError("level must lie in [0, 24]");
}

ProblemConfig reduce(const ProblemConfig& cfg, int L) {
  ProblemConfig r = cfg;
  r.d = static_cast<int>(level_dimension(L));
  validate_config(r);
  return r;
}

}  // namespace

void validate_ball(const SobolevBall& ball) {
  if (!(ball.s > 0.0)) throw ValidationError("s must be > 0");
  if (!(ball.R > 0.0)) throw ValidationError("R must be > 0");
}

std::int64_t level_dimension(int L) {
  check_level(L);
  return (std::int64_t{1} << (L + 1)) - 1;
}

LeveledSignal::LeveledSignal(std::vector<std::vector<double>> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) throw ValidationError("leveled signal needs at least level 0");
  check_level(max_level());
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    if (levels_[l].size() != (std::size_t{1} << l)) {
      throw ValidationError("level " + std::to_string(l) + " must hold " + std::to_string(std::size_t{1} << l) +
                            " coefficients");
    }
    for (double v : levels_[l])
      if (!std::isfinite(v)) throw ValidationError("leveled signal entries must be finite");
  }
}

LeveledSignal LeveledSignal::zeros(int max_level) {
  check_level(max_level);
  std::vector<std::vector<double>> levels;
  for (int l = 0; l <= max_level; ++l) levels.emplace_back(std::size_t{1} << l, 0.0);
  return LeveledSignal(std::move(levels));
}

double LeveledSignal::squared_norm() const {
  double sum = 0.0;
  for (const auto& lvl : levels_)
    for (double v : lvl) sum += v * v;
  return sum;
}

double LeveledSignal::l2_norm() const { return std::sqrt(squared_norm()); }

double LeveledSignal::sobolev_norm_squared(double s) const {
  double sum = 0.0;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    double level_sum = 0.0;
    for (double v : levels_[l]) level_sum += v * v;
    sum += std::exp2(2.0 * static_cast<double>(l) * s) * level_sum;
  }
  return sum;
}

double LeveledSignal::sobolev_norm(double s) const { return std::sqrt(sobolev_norm_squared(s)); }

double LeveledSignal::tail_squared_norm(int L) const {
  double sum = 0.0;
  for (std::size_t l = static_cast<std::size_t>(std::max(L + 1, 0)); l < levels_.size(); ++l)
    for (double v : levels_[l]) sum += v * v;
  return sum;
}

Signal LeveledSignal::truncated(int L) const {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(level_dimension(L)));
  for (int l = 0; l <= L; ++l) {
    if (l <= max_level()) {
      flat.insert(flat.end(), levels_[l].begin(), levels_[l].end());
    } else {
      flat.insert(flat.end(), std::size_t{1} << l, 0.0);
    }
  }
  return Signal(std::move(flat));
}

int truncation_level(double s, double rho) {
  if (!(s > 0.0)) throw ValidationError("s must be > 0");
  if (!(rho > 0.0)) throw ValidationError("rho must be > 0");
  if (rho >= 1.0) return 1;
  const double raw = std::floor(std::log2(1.0 / rho) / s);
  return static_cast<int>(std::clamp(raw, 1.0, static_cast<double>(kMaxLevel)));
}

double theoretical_rate_finite(std::int64_t n, std::int64_t m, std::int64_t d, std::int64_t b, Coin coin) {
  if (n < 1 || m < 1 || d < 1 || b < 1) throw ValidationError("n, m, d, b must be >= 1");
  const double dd = static_cast<double>(d);
  const double eff = static_cast<double>(std::min(b, d));
  const double base = std::sqrt(dd) / static_cast<double>(n);
  const double sm = std::sqrt(static_cast<double>(m));
  if (coin == Coin::Public) return base * std::min(std::sqrt(dd / eff), sm);
  return base * std::min(dd / eff, sm);
}

double theoretical_rate_finite(const ProblemConfig& cfg) {
  return theoretical_rate_finite(cfg.n, cfg.m, cfg.d, cfg.b, cfg.coin);
}

std::string_view to_string(RateRegime regime) {
  switch (regime) {
    case RateRegime::Full: return "full";
    case RateRegime::Intermediate: return "intermediate";
    case RateRegime::Low: return "low";
  }
  return "?";
}

RateRegime nonparam_regime(double n, double m, double b, double s, Coin coin) {
  const double e = 1.0 / (2.0 * s + 0.5);
  const double full = std::pow(n, e);
  if (b >= full) return RateRegime::Full;
  const double m_exp = coin == Coin::Public ? (2.0 * s + 1.0) * e : (s + 0.75) * e;
  return b >= full / std::pow(m, m_exp) ? RateRegime::Intermediate : RateRegime::Low;
}

double theoretical_rate_nonparam(double n, double m, double b, const SobolevBall& ball, Coin coin) {
  validate_ball(ball);
  if (!(n >= 1.0 && m >= 1.0 && b >= 1.0)) throw ValidationError("n, m, b must be >= 1");
  const double s = ball.s;
  const double e = 1.0 / (2.0 * s + 0.5);
  switch (nonparam_regime(n, m, b, s, coin)) {
    case RateRegime::Full: return std::pow(n, -2.0 * s * e);
    case RateRegime::Intermediate:
      if (coin == Coin::Public) return std::pow(std::sqrt(b) * n, -2.0 * s / (2.0 * s + 1.0));
      return std::pow(b * n, -2.0 * s / (2.0 * s + 1.5));
    case RateRegime::Low: return std::pow(n / std::sqrt(m), -2.0 * s * e);
  }
  return 0.0;
}

Dataset sample_sequence_observations(const ProblemConfig& cfg, const LeveledSignal& f, int L, const SeedNode& seed) {
  if (f.max_level() < L) {
    throw ValidationError("signal defined up to level " + std::to_string(f.max_level()) + " < L = " +
                          std::to_string(L));
  }
  const ProblemConfig reduced = reduce(cfg, L);
  return sample_observations(reduced, f.truncated(L), seed);
}

std::string_view to_string(AlternativeShape shape) {
  switch (shape) {
    case AlternativeShape::BoundaryFlat: return "BoundaryFlat";
    case AlternativeShape::LowFrequency: return "LowFrequency";
    case AlternativeShape::RandomDirection: return "RandomDirection";
  }
  return "?";
}

AlternativeShape parse_alternative_shape(std::string_view text) {
  if (text == "BoundaryFlat") return AlternativeShape::BoundaryFlat;
  if (text == "LowFrequency") return AlternativeShape::LowFrequency;
  if (text == "RandomDirection") return AlternativeShape::RandomDirection;
  throw ValidationError("unknown signal kind '" + std::string(text) +
                        "' (expected BoundaryFlat, LowFrequency, RandomDirection)");
}

LeveledSignal make_sobolev_alternative(const SobolevBall& ball, double rho, AlternativeShape shape,
                                       const SeedNode& seed) {
  validate_ball(ball);
  if (!(rho > 0.0)) throw ValidationError("rho must be > 0");
  const int L = truncation_level(ball.s, rho);
  LeveledSignal out;
  switch (shape) {
    case AlternativeShape::LowFrequency: {
      out = LeveledSignal(std::vector<std::vector<double>>{std::vector<double>{rho}});
      break;
    }
    case AlternativeShape::BoundaryFlat: {
      std::vector<std::vector<double>> levels;
      for (int l = 0; l <= L; ++l) levels.emplace_back(std::size_t{1} << l, 0.0);
      const double v = rho / std::sqrt(std::exp2(L));
      std::fill(levels[L].begin(), levels[L].end(), v);
      out = LeveledSignal(std::move(levels));
      break;
    }
    case AlternativeShape::RandomDirection: {
      auto rng = seed.stream();
      std::vector<std::vector<double>> levels;
      double sq = 0.0;
      for (int l = 0; l <= L; ++l) {
        std::vector<double> lvl(std::size_t{1} << l);
        for (auto& v : lvl) {
          v = rng.normal();
          sq += v * v;
        }
        levels.push_back(std::move(lvl));
      }
      const double scale = rho / std::sqrt(sq);
      for (auto& lvl : levels)
        for (auto& v : lvl) v *= scale;
      out = LeveledSignal(std::move(levels));
      break;
    }
  }
  const double sob = out.sobolev_norm(ball.s);
  if (sob > ball.R * (1.0 + 1e-12)) {
    throw InfeasibleError("alternative with ||f|| = " + std::to_string(rho) + " has Sobolev norm " +
                          std::to_string(sob) + " > R = " + std::to_string(ball.R));
  }
  return out;
}

NonparamTest::NonparamTest(const ProblemConfig& cfg, const SobolevBall& ball, double rho, const ProtocolOptions& opts)
    : reduced_(reduce(cfg, truncation_level(ball.s, rho))),
      level_(truncation_level(ball.s, rho)),
      protocol_(choose_protocol(reduced_, opts), reduced_) {
  validate_ball(ball);
}

Calibration NonparamTest::calibrate(std::int64_t null_reps, const SeedNode& seed, EngineKind engine,
                                    int threads) const {
  return distest::calibrate(protocol_, null_reps, seed, engine, threads);
}

Outcome NonparamTest::run(const LeveledSignal& f, const SeedNode& rep, EngineKind engine) const {
  return protocol_.run(f.truncated(level_), rep, engine);
}

bool run_nonparam_test(const NonparamTest& test, const Calibration& cal, const LeveledSignal& f, const SeedNode& rep,
                       EngineKind engine) {
  return TestProtocol::decide(test.run(f, rep, engine), cal.thresholds);
}

}  // namespace distest
