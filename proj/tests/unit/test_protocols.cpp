#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "distest/engine.hpp"
#include "distest/protocols.hpp"
#include "distest/stats.hpp"

using namespace distest;

namespace {

ProblemConfig make(std::int64_t n, int m, int d, int b, Coin coin = Coin::Private, double alpha = 0.1) {
  ProblemConfig c;
  c.n = n;
  c.m = m;
  c.d = d;
  c.b = b;
  c.alpha = alpha;
  c.coin = coin;
  return c;
}

std::vector<Transcript> bits(std::initializer_list<int> values) {
  std::vector<Transcript> out;
  for (int v : values) {
    Transcript t;
    t.push_bit(v != 0);
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST(ChooseProtocol, ExamplesAndFallback) {
  EXPECT_EQ(choose_protocol(make(10000, 1024, 256, 4, Coin::Public)), ProtocolKind::T2);
  EXPECT_EQ(choose_protocol(make(10000, 8, 256, 1)), ProtocolKind::T1Local);
  EXPECT_EQ(choose_protocol(make(10000, 1024, 16, 8)), ProtocolKind::T3);
  EXPECT_EQ(choose_protocol(make(10000, 64, 128, 1, Coin::Public)), ProtocolKind::T1);  // mb < d
  EXPECT_EQ(choose_protocol(make(10000, 1024, 256, 4)), ProtocolKind::T1);             // m b^2 < d^2
  ProtocolOptions o;
  o.small_m_cutoff = 4;
  EXPECT_EQ(choose_protocol(make(10000, 8, 4, 2), o), ProtocolKind::T3);
  EXPECT_EQ(choose_protocol(make(10000, 8, 4, 1), o), ProtocolKind::T1);
}

TEST(ChooseProtocol, NamesRoundTrip) {
  for (auto k : {ProtocolKind::T1, ProtocolKind::T1Local, ProtocolKind::T2, ProtocolKind::T3})
    EXPECT_EQ(parse_protocol(protocol_name(k)), k);
  EXPECT_EQ(resolve_protocol("auto", make(10000, 1024, 256, 4, Coin::Public)), ProtocolKind::T2);
  EXPECT_EQ(resolve_protocol("T1", make(10000, 1024, 256, 4, Coin::Public)), ProtocolKind::T1);
  EXPECT_THROW(parse_protocol("T4"), ValidationError);
}

TEST(T1, HandComputedStatistics) {
  EXPECT_DOUBLE_EQ(t1_statistic(bits({1, 1, 1, 1})), 0.75);
  EXPECT_DOUBLE_EQ(t1_statistic(bits({1, 1, 0, 0})), 0.25);
  EXPECT_DOUBLE_EQ(t1_statistic_from_count(0, 4), 0.75);
  EXPECT_TRUE(t1_decide(bits({1, 1, 1, 1}), 0.7));
  EXPECT_FALSE(t1_decide(bits({1, 1, 0, 0}), 0.7));
}

TEST(T1, ZeroObservationSendsZero) {
  const auto c = make(100, 4, 8, 1);
  std::vector<double> x(8, 0.0);
  auto rng = SeedNode(1).stream();
  for (int i = 0; i < 100; ++i) {
    const Transcript t = t1_encode(c, x, rng);
    ASSERT_EQ(t.bit_count(), 1u);
    EXPECT_FALSE(t.bit(0));
  }
  EXPECT_DOUBLE_EQ(t1_local_chi2(c, std::vector<double>{1.0, 2.0, 0, 0, 0, 0, 0, 0}), 25.0 * 5.0);
}

TEST(T1, NullBitIsFair) {
  const auto c = make(100, 4, 8, 1);
  auto rng = SeedNode(2).stream();
  constexpr int kN = 100000;
  std::vector<double> x(8);
  int ones = 0;
  for (int r = 0; r < kN; ++r) {
    for (auto& v : x) v = c.noise_sd() * rng.normal();
    ones += t1_encode(c, x, rng).bit(0);
  }
  EXPECT_NEAR(static_cast<double>(ones) / kN, 0.5, 3.0 * std::sqrt(0.25 / kN));
}

TEST(T1, AlternativeBitBiasedUpward) {
  // n ||f||^2 / m = d: E[Y] = P(noncentral chi2_d(d) >= chi2_d), estimated against an independent two-sample MC
  const auto c = make(400, 4, 8, 1);
  const double level = std::sqrt(1.0 / c.local_precision());  // (n/m) f_i^2 = 1 per coordinate
  auto rng = SeedNode(3).stream();
  constexpr int kN = 50000;
  std::vector<double> x(8);
  int ones = 0, wins = 0;
  for (int r = 0; r < kN; ++r) {
    for (auto& v : x) v = level + c.noise_sd() * rng.normal();
    ones += t1_encode(c, x, rng).bit(0);
    double a = 0.0, b = 0.0;
    for (int i = 0; i < 8; ++i) {
      const double z = 1.0 + rng.normal();
      a += z * z;
      b += std::pow(rng.normal(), 2);
    }
    wins += a >= b;
  }
  const double p1 = static_cast<double>(ones) / kN;
  const double p2 = static_cast<double>(wins) / kN;
  EXPECT_GT(p1, 0.55);
  EXPECT_NEAR(p1, p2, 4.0 * std::sqrt(0.5 / kN));
}

TEST(T1Local, StatisticAndDecision) {
  const auto c = make(100, 4, 64, 1);
  std::vector<double> x(64, 0.0);
  EXPECT_DOUBLE_EQ(t1_local_statistic(c, x), -8.0);
  EXPECT_FALSE(t1_local_decide(c, x, -7.9));
  EXPECT_TRUE(t1_local_decide(c, x, -8.1));
}

TEST(T1Local, NullLevelAndPower) {
  const auto c = make(6400, 4, 64, 1);
  auto rng = SeedNode(4).stream();
  constexpr int kN = 20000;
  std::vector<double> x(64);
  int rej0 = 0, rej1 = 0;
  // (n/m) ||f||^2 = 6 sqrt(d) = 48, spread flat
  const double fi = std::sqrt(48.0 / 64.0 / c.local_precision());
  // P(chi2_64 >= 64 + 8 * 1.645) = 0.1251
  for (int r = 0; r < kN; ++r) {
    for (auto& v : x) v = c.noise_sd() * rng.normal();
    rej0 += t1_local_decide(c, x, 1.645);
    for (auto& v : x) v = fi + c.noise_sd() * rng.normal();
    rej1 += t1_local_decide(c, x, 1.645);
  }
  // the normal cutoff ignores the chi-square skew
  EXPECT_NEAR(static_cast<double>(rej0) / kN, 0.1251, 0.01);
  EXPECT_GT(static_cast<double>(rej1) / kN, 0.9);
}

TEST(T2, HandComputedStatistic) {
  std::vector<Transcript> ts = bits({1, 1});
  EXPECT_DOUBLE_EQ(t2_statistic(ts, 2, 1), 0.25);
  const std::vector<std::int64_t> counts{2};
  EXPECT_DOUBLE_EQ(t2_statistic_from_counts(counts, 2), 0.25);
}

TEST(T2, SignBitsAndExcessBudget) {
  const auto c = make(100, 2, 1, 3, Coin::Public);
  EXPECT_EQ(t2_bits(c), 1);
  const OrthogonalMatrix plus(Eigen::MatrixXd::Identity(1, 1));
  const Transcript t = t2_encode(c, std::vector<double>{0.3}, plus);
  ASSERT_EQ(t.bit_count(), 1u);
  EXPECT_TRUE(t.bit(0));
  EXPECT_FALSE(t2_encode(c, std::vector<double>{-0.3}, plus).bit(0));
  EXPECT_EQ(t2_bits(make(100, 2, 64, 8, Coin::Public)), 8);
}

TEST(T2, ConditionalFrequencyMatchesNormalCdf) {
  const auto c = make(100, 4, 2, 2, Coin::Public);
  const auto u = haar_rotation(2, SeedNode(5));
  const Eigen::Vector2d f(0.1, -0.15);
  const Eigen::Vector2d uf = u.entries().transpose() * f;
  auto rng = SeedNode(6).stream();
  constexpr int kN = 100000;
  int ones[2] = {0, 0};
  std::vector<double> x(2);
  for (int r = 0; r < kN; ++r) {
    for (int i = 0; i < 2; ++i) x[i] = f[i] + c.noise_sd() * rng.normal();
    const Transcript t = t2_encode(c, x, u);
    ones[0] += t.bit(0);
    ones[1] += t.bit(1);
  }
  for (int i = 0; i < 2; ++i) {
    const double p = stats::normal_cdf(std::sqrt(c.local_precision()) * uf[i]);
    EXPECT_NEAR(static_cast<double>(ones[i]) / kN, p, 4.0 * std::sqrt(p * (1 - p) / kN)) << i;
  }
}

TEST(Partition, IdentityAndEvenSplit) {
  const auto p = build_partition(4, 4, 1);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(p.sets[i], std::vector<int>{i});
  const auto q = build_partition(4, 2, 1);
  EXPECT_EQ(q.sets[0].size(), 2u);
  EXPECT_EQ(q.sets[1].size(), 2u);
}

TEST(Partition, ExhaustiveConstraints) {
  for (int m = 1; m <= 24; ++m)
    for (int d = 1; d <= 12; ++d)
      for (int bp = 1; bp <= d; ++bp) {
        if (m * bp < d) {
          EXPECT_THROW(build_partition(m, d, bp), InfeasibleError);
          continue;
        }
        const auto p = build_partition(m, d, bp);
        const int lo = m * bp / d;
        std::vector<int> membership(m, 0);
        for (int i = 0; i < d; ++i) {
          const int sz = static_cast<int>(p.sets[i].size());
          ASSERT_TRUE(sz == lo || sz == lo + 1) << m << " " << d << " " << bp;
          for (int j : p.sets[i]) ++membership[j];
        }
        for (int j = 0; j < m; ++j) {
          ASSERT_EQ(membership[j], bp);
          ASSERT_EQ(static_cast<int>(p.coords[j].size()), bp);
          ASSERT_EQ(std::set<int>(p.coords[j].begin(), p.coords[j].end()).size(), p.coords[j].size());
        }
        EXPECT_EQ(p.min_set_size(), lo);
      }
  const auto p = build_partition(6, 4, 2);
  for (const auto& s : p.sets) EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(p.sets, build_partition(6, 4, 2).sets);
}

TEST(T31, AllPositiveGivesAllOnes) {
  const auto plan = build_partition(4, 4, 2);
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  for (int j = 0; j < 4; ++j) {
    const Transcript t = t31_encode(j, x, plan);
    ASSERT_EQ(t.bit_count(), 2u);
    EXPECT_TRUE(t.bit(0));
    EXPECT_TRUE(t.bit(1));
  }
}

TEST(T31, StatisticFromEqualSets) {
  // d=2, |I_i|=2, counts (2, 1): (1/(2 sqrt2)) [(2-1)^2 + (1-1)^2] - sqrt2/4
  const auto plan = build_partition(4, 2, 1);
  const std::vector<std::int64_t> ones{2, 1};
  const double expect = std::abs(1.0 / (2.0 * std::sqrt(2.0)) - std::sqrt(2.0) / 4.0);
  EXPECT_NEAR(t31_statistic_from_counts(ones, plan), expect, 1e-15);
}

TEST(T32, MultiplicityAndWidth) {
  EXPECT_EQ(t32_multiplicity(10, 4), 204);
  EXPECT_EQ(t32_width(204, 4), 10);
  EXPECT_EQ(t32_multiplicity(4, 16), 0);
  EXPECT_TRUE(t32_budget_predicate(10, 4));    // 2 log2 5 = 4.64
  EXPECT_FALSE(t32_budget_predicate(4, 4));
  EXPECT_GT(t32_multiplicity(200, 3), 0);       // saturates instead of overflowing
}

TEST(T32, ZeroObservationAndNullMean) {
  const auto c = make(100, 4, 4, 10);
  auto rng = SeedNode(7).stream();
  const std::vector<double> zero(4, 0.0);
  const Transcript t0 = t32_encode(c, zero, 10, rng);
  EXPECT_EQ(t0.bit_count(), 10u);
  EXPECT_EQ(t0.read_uint(0, 10), 0u);
  constexpr int kN = 20000;
  double s = 0.0;
  std::vector<double> x(4);
  for (int r = 0; r < kN; ++r) {
    for (auto& v : x) v = c.noise_sd() * rng.normal();
    const auto n = t32_encode(c, x, 10, rng).read_uint(0, 10);
    ASSERT_LE(n, 816u);
    s += static_cast<double>(n);
  }
  // Var N = C d / 4 + C^2 d Var(U) with U uniform
  const double var = 204.0 * 4 / 4 + 204.0 * 204.0 * 4 / 12.0;
  EXPECT_NEAR(s / kN, 408.0, 4.0 * std::sqrt(var / kN));
  EXPECT_THROW(t32_encode(make(100, 4, 16, 4), std::vector<double>(16), 4, rng), InfeasibleError);
}

TEST(T32, StatisticFromTotal) {
  // m=2, d=4, C=204: total at the null mean gives |0 - 1/4|
  EXPECT_DOUBLE_EQ(t32_statistic_from_total(816, 2, 4, 204), 0.25);
  const double dev = 900.0 - 816.0;
  EXPECT_NEAR(t32_statistic_from_total(900, 2, 4, 204), std::abs(dev * dev / (4.0 * 2 * 204) - 0.25), 1e-12);
}

TEST(T3Layout, SplitsWhenPredicateHolds) {
  const auto both = t3_layout(make(10000, 64, 4, 10));
  EXPECT_TRUE(both.second_active);
  EXPECT_EQ(both.budget_first, 5);
  EXPECT_EQ(both.budget_second, 5);
  EXPECT_EQ(both.multiplicity, 6);  // floor(32 / 5)
  EXPECT_EQ(both.plan.bprime, 4);   // min(5, d)
  const auto one = t3_layout(make(10000, 64, 16, 4));
  EXPECT_FALSE(one.second_active);
  EXPECT_EQ(one.budget_first, 4);
  EXPECT_TRUE(t3_decide_combined(true, false, both));
  EXPECT_TRUE(t3_decide_combined(false, true, both));
  EXPECT_FALSE(t3_decide_combined(false, false, both));
  EXPECT_FALSE(t3_decide_combined(false, true, one));
}

TEST(BitBudget, EveryProtocolWithinB) {
  for (int b : {1, 2, 3, 5, 8, 12})
    for (int d : {1, 3, 8, 20}) {
      const auto priv = make(1000, 32, d, b);
      const auto pub = make(1000, 32, d, b, Coin::Public);
      std::vector<TestProtocol> ps{TestProtocol(ProtocolKind::T1, priv), TestProtocol(ProtocolKind::T1Local, priv),
                                   TestProtocol(ProtocolKind::T2, pub)};
      if (32 * std::min(b, d) >= d) ps.emplace_back(ProtocolKind::T3, priv);
      for (const auto& p : ps) {
        EXPECT_LE(p.bits_per_machine(), b);
        const Outcome out = p.run_exact(Signal::zeros(d), SeedNode(8).child("b", b).child("d", d));
        EXPECT_LE(out.max_bits, b) << p.name();
        for (const auto& t : out.transcripts) EXPECT_LE(t.bit_count(), static_cast<std::size_t>(b));
      }
    }
}
