#include "distest/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "distest/parallel.hpp"
#include "distest/stats.hpp"

namespace distest {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double nan_max(const std::vector<double>& v) {
  double best = -std::numeric_limits<double>::infinity();
  for (double x : v)
    if (!std::isnan(x)) best = std::max(best, x);
  return best;
}

}  // namespace

double log_log(double n) { return std::max(std::log(std::log(std::max(n, 3.0))), 1e-3); }

double adaptive_rate(double n, double m, double b, double s, Coin coin) {
  if (!(n >= 2.0 && m >= 1.0 && b >= 1.0 && s > 0.0)) throw ValidationError("adaptive rate needs n >= 2, m, b >= 1, s > 0");
  const double lg = std::log2(n);
  const double e = 1.0 / (2.0 * s + 0.5);
  const bool pub = coin == Coin::Public;
  if (b >= lg) {
    if (b >= lg * std::pow(n, e)) return std::pow(n, -2.0 * s * e);
    const double m_exp = pub ? (2.0 * s + 1.0) * e : (s + 0.75) * e;
    const double intermediate = lg * std::max(std::pow(n, e) / std::pow(m, m_exp), 1.0);
    if (b >= intermediate) {
      if (pub) return std::pow(std::sqrt(b) * n / std::sqrt(lg), -2.0 * s / (2.0 * s + 1.0));
      return std::pow(b * n / lg, -2.0 * s / (2.0 * s + 1.5));
    }
    return std::pow(n / std::sqrt(m), -2.0 * s * e);
  }
  if (pub) {
    if (m >= std::pow(n, 1.0 / (2.0 * s + 1.0))) return std::pow(std::sqrt(b) * n / std::sqrt(lg), -2.0 * s / (2.0 * s + 1.0));
    return std::pow(std::sqrt(b) * n / std::sqrt(m * lg), -2.0 * s * e);
  }
  const double cut = std::pow(n, 2.0 / (2.0 * s + 1.5)) * std::pow(b / lg, (s - 0.25) / (2.0 * s + 1.5));
  if (m >= cut) return std::pow(b * n / lg, -2.0 * s / (2.0 * s + 1.5));
  return std::pow(n * std::sqrt(b) / std::sqrt(m * lg), -2.0 * s * e);
}

double AdaptiveGrid::rho_for(double s) const {
  return std::sqrt(adaptive_rate(static_cast<double>(n), m, b, s, coin));
}

int AdaptiveGrid::level_for(double s) const { return truncation_level(s, rho_for(s)); }

AdaptiveGrid build_grid(double s_min, double s_max, std::int64_t n, int m, int b, Coin coin) {
  if (!(s_min > 0.0) || !(s_max >= s_min)) throw ValidationError("smoothness range needs 0 < s_min <= s_max");
  if (n < 2 || m < 1 || b < 1) throw ValidationError("grid needs n >= 2 and m, b >= 1");
  AdaptiveGrid g;
  g.s_min = s_min;
  g.s_max = s_max;
  g.n = n;
  g.m = m;
  g.b = b;
  g.coin = coin;
  const double step = 1.0 / std::log2(static_cast<double>(n));
  for (int k = 0;; ++k) {
    const double s = s_min + k * step;
    if (s > s_max * (1.0 + 1e-12)) break;
    g.s_values.push_back(s);
  }
  if (g.s_values.back() < s_max) g.s_values.push_back(s_max);
  for (double s : g.s_values) {
    const int L = g.level_for(s);
    g.level_of_s.push_back(L);
    g.rho_map.emplace(L, g.rho_for(s));
  }
  const auto [lo, hi] = std::minmax_element(g.level_of_s.begin(), g.level_of_s.end());
  for (int L = *lo; L <= *hi; ++L) g.levels.push_back(L);
  if (g.levels.empty()) throw ValidationError("empty adaptive grid");
  const auto cap = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n))));
  if (g.levels.size() > cap) throw ValidationError("adaptive grid has more than ceil(log2 n) levels");
  return g;
}

int adaptive_mprime(std::int64_t n, int m, int b) {
  const double lg = std::log2(static_cast<double>(n));
  const auto mb = static_cast<double>(m) * b;
  if (mb < lg) {
    throw InfeasibleError("insufficient total budget for adaptation: m*b = " + std::to_string(m * b) +
                          " < log2 n = " + std::to_string(lg));
  }
  const int mp = static_cast<int>(std::floor(m * std::min(lg, static_cast<double>(b)) / lg));
  return std::max(mp, 1);
}

MachineSchedule build_schedule(std::int64_t n, int m, int b, const AdaptiveGrid& grid) {
  if (m < 1 || b < 1) throw ValidationError("m and b must be >= 1");
  MachineSchedule sch;
  sch.levels = grid.levels;
  sch.mprime = adaptive_mprime(n, m, b);
  const auto levels = static_cast<std::int64_t>(grid.levels.size());
  const std::int64_t slots = static_cast<std::int64_t>(sch.mprime) * levels;
  if (slots > static_cast<std::int64_t>(m) * b) {
    throw InfeasibleError("insufficient total budget for adaptation: m'|C| = " + std::to_string(slots) +
                          " > mb = " + std::to_string(static_cast<std::int64_t>(m) * b));
  }
  sch.memberships.assign(static_cast<std::size_t>(m), 0);
  for (std::int64_t k = 0; k < levels; ++k) {
    std::vector<int> subset;
    for (int i = 0; i < sch.mprime; ++i) {
      const int j = static_cast<int>((k * sch.mprime + i) % m);
      subset.push_back(j);
      ++sch.memberships[j];
    }
    std::sort(subset.begin(), subset.end());
    sch.subsets.push_back(std::move(subset));
  }
  const int max_membership = static_cast<int>((slots + m - 1) / m);
  for (int L : grid.levels) {
    const int per_level = std::max(1, b / max_membership);
    sch.level_bits.push_back(static_cast<int>(std::min<std::int64_t>(per_level, level_dimension(L))));
  }
  return sch;
}

AdaptiveTest::AdaptiveTest(const ProblemConfig& cfg, double s_min, double s_max, const AdaptiveOptions& opts)
    : cfg_(cfg), opts_(opts) {
  validate_config(cfg_);
  if (cfg_.n < 2) throw ValidationError("adaptive tests need n >= 2");
  grid_ = build_grid(s_min, s_max, cfg_.n, cfg_.m, cfg_.b, cfg_.coin);
  schedule_ = build_schedule(cfg_.n, cfg_.m, cfg_.b, grid_);
  const int mp = schedule_.mprime;
  for (std::size_t k = 0; k < grid_.levels.size(); ++k) {
    AdaptiveLevelLayout lay;
    lay.level = grid_.levels[k];
    lay.nu = level_dimension(lay.level);
    lay.budget = schedule_.level_bits[k];
    const double predicate_arg = opts_.level_predicate ? static_cast<double>(lay.level) : static_cast<double>(lay.nu + 1);
    const int half = lay.budget / 2;
    const std::int64_t c = t32_multiplicity(half, lay.nu);
    lay.second_active = 2.0 * std::log2(predicate_arg) <= lay.budget && c >= 1;
    if (lay.second_active) {
      lay.budget_first = half;
      lay.budget_second = half;
      lay.multiplicity = c;
      lay.width_second = t32_width(c, lay.nu);
    } else {
      lay.budget_first = lay.budget;
    }
    const int bp = static_cast<int>(std::min<std::int64_t>(lay.budget_first, lay.nu));
    lay.first_active = bp >= 1 && static_cast<std::int64_t>(mp) * bp >= lay.nu;
    if (lay.first_active) lay.plan = build_partition(mp, static_cast<int>(lay.nu), bp);
    layout_.push_back(std::move(lay));
  }
}

double AdaptiveTest::threshold() const {
  return opts_.threshold_constant * std::sqrt(log_log(static_cast<double>(cfg_.n)));
}

double AdaptiveTest::threshold_second() const {
  return opts_.kappa_second * std::sqrt(log_log(static_cast<double>(cfg_.n)));
}

AdaptiveOutcome AdaptiveTest::run(const LeveledSignal& f, const SeedNode& rep) const {
  const int m = cfg_.m;
  const int lmax = grid_.levels.back();
  const auto dim = static_cast<std::size_t>(level_dimension(lmax));
  const Signal flat = f.truncated(lmax);
  const double sigma = cfg_.noise_sd();
  const double precision = cfg_.local_precision();
  const bool pub = cfg_.coin == Coin::Public;

  // observations of dimension nu_{L_max}; lower levels are prefixes
  std::vector<double> x(static_cast<std::size_t>(m) * dim);
  const SeedNode data = rep.child("data");
  for (int j = 0; j < m; ++j) {
    auto rng = data.child("machine", static_cast<std::uint64_t>(j)).stream();
    sample_noisy_row(flat.coeffs(), sigma, rng, std::span<double>(x.data() + j * dim, dim));
  }
  auto row = [&](int j, std::int64_t len) {
    return std::span<const double>(x.data() + static_cast<std::size_t>(j) * dim, static_cast<std::size_t>(len));
  };

  std::vector<RandomStream> t1_rng;
  std::vector<RandomStream> t3_rng;
  const SeedNode encode = rep.child("encode");
  for (int j = 0; j < m; ++j) {
    t1_rng.push_back(encode.child("machine", static_cast<std::uint64_t>(j)).stream());
    t3_rng.push_back(encode.child("count", static_cast<std::uint64_t>(j)).stream());
  }
  std::vector<std::int64_t> bits1(static_cast<std::size_t>(m), 0);
  std::vector<std::int64_t> bits2(static_cast<std::size_t>(m), 0);
  std::vector<std::int64_t> bits3(static_cast<std::size_t>(m), 0);

  AdaptiveOutcome out;
  out.levels = grid_.levels;
  const std::size_t nl = grid_.levels.size();
  out.s1.assign(nl, kNaN);
  out.s_public.assign(nl, kNaN);
  out.s31.assign(nl, kNaN);
  out.s32.assign(nl, kNaN);

  for (std::size_t k = 0; k < nl; ++k) {
    const int L = grid_.levels[k];
    const std::int64_t nu = level_dimension(L);
    const auto& members = schedule_.subsets[k];
    const int mp = static_cast<int>(members.size());

    // T_I: one Bernoulli chi-square bit per member
    std::int64_t ones = 0;
    for (int j : members) {
      const auto xs = row(j, nu);
      double sq = 0.0;
      for (double v : xs) sq += v * v;
      ones += bernoulli(stats::chi2_cdf(nu, precision * sq), t1_rng[j]) ? 1 : 0;
      ++bits1[j];
    }
    out.s1[k] = static_cast<double>(2 * ones - mp) / std::sqrt(static_cast<double>(mp));

    if (pub) {
      const int bp = schedule_.level_bits[k];
      const Eigen::MatrixXd frame = haar_frame(bp, static_cast<int>(nu), rep.child("coin").child("level", L));
      std::vector<std::int64_t> counts(static_cast<std::size_t>(bp), 0);
      for (int j : members) {
        const Eigen::Map<const Eigen::VectorXd> xv(row(j, nu).data(), static_cast<Eigen::Index>(nu));
        const Eigen::VectorXd proj = frame * xv;
        for (int i = 0; i < bp; ++i) counts[i] += proj[i] > 0.0 ? 1 : 0;
        bits2[j] += bp;
      }
      // signed statistic: (1/(sqrt(b') m')) sum_i [(S_i - m'/2)^2 - m'/4]
      std::int64_t sum = 0;
      for (auto c : counts) sum += (2 * c - mp) * (2 * c - mp) - mp;
      out.s_public[k] = static_cast<double>(sum) / (4.0 * std::sqrt(static_cast<double>(bp)) * mp);
    } else {
      const auto& lay = layout_[k];
      if (lay.first_active) {
        std::vector<std::int64_t> pos(static_cast<std::size_t>(nu), 0);
        for (int local = 0; local < mp; ++local) {
          const auto xs = row(members[local], nu);
          for (int i : lay.plan.coords[local]) pos[i] += xs[i] > 0.0 ? 1 : 0;
          bits3[members[local]] += static_cast<std::int64_t>(lay.plan.coords[local].size());
        }
        out.s31[k] = t31_statistic_from_counts(pos, lay.plan);
      }
      if (lay.second_active) {
        std::int64_t total = 0;
        for (int j : members) {
          const auto xs = row(j, nu);
          for (double v : xs) {
            const double q = std::erf(std::abs(v / sigma) / std::numbers::sqrt2);
            total += t3_rng[j].binomial(lay.multiplicity, q);
          }
          bits3[j] += lay.width_second;
        }
        out.s32[k] = t32_statistic_from_total(total, mp, nu, lay.multiplicity);
      }
    }
  }
  out.bits_t1 = *std::max_element(bits1.begin(), bits1.end());
  out.bits_t2 = *std::max_element(bits2.begin(), bits2.end());
  out.bits_t3 = *std::max_element(bits3.begin(), bits3.end());
  return out;
}

bool AdaptiveTest::t1_decide(const AdaptiveOutcome& out) const { return nan_max(out.s1) >= threshold(); }

bool AdaptiveTest::t2_decide(const AdaptiveOutcome& out) const { return nan_max(out.s_public) >= threshold(); }

bool AdaptiveTest::t31_decide(const AdaptiveOutcome& out) const { return nan_max(out.s31) >= threshold(); }

bool AdaptiveTest::t32_decide(const AdaptiveOutcome& out) const { return nan_max(out.s32) >= threshold_second(); }

bool AdaptiveTest::t3_decide(const AdaptiveOutcome& out) const { return t31_decide(out) || t32_decide(out); }

bool AdaptiveTest::combined_decide(const AdaptiveOutcome& out) const {
  if (cfg_.coin == Coin::Public) return t1_decide(out) || t2_decide(out);
  return t1_decide(out) || t3_decide(out);
}

double AdaptiveTest::calibrate_kappa_second(std::int64_t null_reps, const SeedNode& seed, int threads) const {
  if (null_reps < 1) throw ValidationError("null_reps must be >= 1");
  const bool any = std::any_of(layout_.begin(), layout_.end(), [](const auto& l) { return l.second_active; });
  if (cfg_.coin == Coin::Public || !any) return kNaN;
  const LeveledSignal zero = LeveledSignal::zeros(grid_.levels.back());
  std::vector<double> sample(static_cast<std::size_t>(null_reps));
  const double scale = std::sqrt(log_log(static_cast<double>(cfg_.n)));
  parallel_for(null_reps, threads, [&](std::int64_t r) {
    sample[r] = nan_max(run(zero, seed.child("null", static_cast<std::uint64_t>(r))).s32) / scale;
  });
  return threshold_from_sample(std::move(sample), cfg_.alpha, false).kappa;
}

bool t1_adapt(const AdaptiveTest& test, const LeveledSignal& f, const SeedNode& rep) {
  return test.t1_decide(test.run(f, rep));
}

bool t2_adapt(const AdaptiveTest& test, const LeveledSignal& f, const SeedNode& rep) {
  if (test.config().coin != Coin::Public) throw ValidationError("the rotated sign test needs a public coin");
  return test.t2_decide(test.run(f, rep));
}

bool t3_adapt(const AdaptiveTest& test, const LeveledSignal& f, const SeedNode& rep) {
  if (test.config().coin != Coin::Private) throw ValidationError("the partition test runs in private-coin mode");
  return test.t3_decide(test.run(f, rep));
}

}  // namespace distest
