#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "distest/calibration.hpp"
#include "distest/engine.hpp"
#include "distest/risk.hpp"

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

std::vector<Outcome> draw(const TestProtocol& p, const Signal& f, EngineKind engine, int reps, std::uint64_t seed) {
  std::vector<Outcome> out;
  const SeedNode root(seed);
  for (int r = 0; r < reps; ++r) out.push_back(p.run(f, root.child("rep", r), engine));
  return out;
}

double tail(const std::vector<Outcome>& v, std::size_t k, double q) {
  double c = 0;
  for (const auto& o : v) c += o.stats[k] >= q ? 1 : 0;
  return c / static_cast<double>(v.size());
}

double joint_tail(const std::vector<Outcome>& v, double q0, double q1) {
  double c = 0;
  for (const auto& o : v) c += (o.stats[0] >= q0 && o.stats[1] >= q1) ? 1 : 0;
  return c / static_cast<double>(v.size());
}

// two-sample z on proportions
double z_gap(double p, double q, int n) {
  const double pool = 0.5 * (p + q);
  const double se = std::sqrt(std::max(pool * (1 - pool), 1e-12) * 2.0 / n);
  return std::abs(p - q) / se;
}

std::vector<double> quantiles(const std::vector<Outcome>& v, std::size_t k) {
  std::vector<double> s;
  for (const auto& o : v) s.push_back(o.stats[k]);
  std::sort(s.begin(), s.end());
  return {s[s.size() / 4], s[s.size() / 2], s[3 * s.size() / 4], s[9 * s.size() / 10]};
}

void expect_same_law(const TestProtocol& p, const Signal& f, int reps) {
  const auto ex = draw(p, f, EngineKind::Exact, reps, 11);
  const auto fa = draw(p, f, EngineKind::Fast, reps, 12);
  for (std::size_t k = 0; k < ex[0].stats.size(); ++k) {
    if (std::isnan(ex[0].stats[k])) {
      EXPECT_TRUE(std::isnan(fa[0].stats[k]));
      continue;
    }
    for (double q : quantiles(ex, k)) EXPECT_LT(z_gap(tail(ex, k, q), tail(fa, k, q), reps), 4.5) << "k=" << k;
  }
  if (ex[0].stats.size() == 2 && !std::isnan(ex[0].stats[1])) {
    const auto q0 = quantiles(ex, 0);
    const auto q1 = quantiles(ex, 1);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        EXPECT_LT(z_gap(joint_tail(ex, q0[a], q1[b]), joint_tail(fa, q0[a], q1[b]), reps), 4.5);
  }
}

}  // namespace

TEST(Threshold, AboveKappaRejects) {
  Threshold t{0.5, 0.25, 0.3};
  EXPECT_TRUE(t.rejects(0.5, 0.99));
  EXPECT_TRUE(t.rejects(0.9, 0.99));
  EXPECT_TRUE(t.rejects(0.5 - 1e-12, 0.99));
  EXPECT_FALSE(t.rejects(0.1, 0.0));
}

TEST(Threshold, BoundaryAtomIsRandomized) {
  Threshold t{0.5, 0.25, 0.3};
  EXPECT_TRUE(t.rejects(0.25, 0.29));
  EXPECT_FALSE(t.rejects(0.25, 0.31));
  Threshold none{0.5, 0.25, 0.0};
  EXPECT_FALSE(none.rejects(0.25, 0.0));
}

TEST(Threshold, NanNeverRejects) {
  Threshold t{-1.0, -2.0, 1.0};
  EXPECT_FALSE(t.rejects(std::nan(""), 0.0));
}

TEST(Threshold, DefaultNeverRejects) {
  Threshold t;
  EXPECT_FALSE(t.rejects(1e300, 0.0));
}

TEST(Engine, RejectsMismatchedShapes) {
  const TestProtocol p(ProtocolKind::T1, make(1000, 4, 3, 1));
  EXPECT_THROW(p.run_fast(Signal::zeros(4), SeedNode(1)), ValidationError);
  EXPECT_THROW(p.run_exact(Dataset(4, 4), SeedNode(1), SeedNode(2)), ValidationError);
  EXPECT_THROW(TestProtocol(ProtocolKind::T2, make(1000, 4, 3, 1, Coin::Private)), ValidationError);
}

TEST(Engine, FastMatchesExactT1) {
  const TestProtocol p(ProtocolKind::T1, make(1000, 12, 5, 1));
  expect_same_law(p, Signal::zeros(5), 4000);
  expect_same_law(p, Signal(std::vector<double>(5, 0.12)), 4000);
}

TEST(Engine, FastMatchesExactT1Local) {
  const TestProtocol p(ProtocolKind::T1Local, make(1000, 4, 6, 1));
  expect_same_law(p, Signal(std::vector<double>{0.1, 0, 0, 0.05, 0, 0}), 4000);
}

TEST(Engine, FastMatchesExactT2) {
  const TestProtocol p(ProtocolKind::T2, make(1000, 10, 6, 3, Coin::Public));
  expect_same_law(p, Signal::zeros(6), 4000);
  expect_same_law(p, Signal(std::vector<double>{0.15, -0.05, 0, 0.1, 0, 0}), 4000);
}

TEST(Engine, FastMatchesExactT3BothSubtests) {
  const TestProtocol p(ProtocolKind::T3, make(1000, 8, 3, 8));
  ASSERT_TRUE(p.t3_layout().second_active);
  expect_same_law(p, Signal::zeros(3), 4000);
  expect_same_law(p, Signal(std::vector<double>{0.15, 0.0, -0.1}), 4000);
}

TEST(Engine, FastMatchesExactT3FirstOnly) {
  const TestProtocol p(ProtocolKind::T3, make(1000, 8, 6, 2));
  ASSERT_FALSE(p.t3_layout().second_active);
  expect_same_law(p, Signal(std::vector<double>{0.1, 0, 0, 0, 0.1, 0}), 4000);
}

TEST(Engine, BitBudgetRespected) {
  for (int b : {1, 2, 4, 8}) {
    for (auto kind : {ProtocolKind::T1, ProtocolKind::T2, ProtocolKind::T3}) {
      const auto cfg = make(1000, 6, 5, b, kind == ProtocolKind::T2 ? Coin::Public : Coin::Private);
      const TestProtocol p(kind, cfg);
      EXPECT_LE(p.bits_per_machine(), b);
      for (int r = 0; r < 5; ++r) {
        const Outcome o = p.run_exact(Signal::zeros(5), SeedNode(5).child("rep", r));
        EXPECT_LE(o.max_bits, b);
        for (const auto& t : o.transcripts) EXPECT_LE(static_cast<int>(t.bit_count()), b);
        EXPECT_LE(p.run_fast(Signal::zeros(5), SeedNode(5).child("rep", r)).max_bits, b);
      }
    }
  }
}

TEST(Engine, PrivateProtocolsIgnoreCoin) {
  const auto cfg = make(1000, 9, 4, 8);
  for (auto kind : {ProtocolKind::T1, ProtocolKind::T1Local, ProtocolKind::T3}) {
    const TestProtocol p(kind, cfg);
    const SeedNode rep(77);
    const Dataset data = sample_observations(cfg, Signal(std::vector<double>{0.1, 0, 0, 0}), rep.child("data"));
    const Outcome a = p.run_exact(data, SeedNode(1), rep);
    const Outcome b = p.run_exact(data, SeedNode(999), rep);
    ASSERT_EQ(a.stats.size(), b.stats.size());
    for (std::size_t k = 0; k < a.stats.size(); ++k) {
      if (std::isnan(a.stats[k])) EXPECT_TRUE(std::isnan(b.stats[k]));
      else EXPECT_EQ(a.stats[k], b.stats[k]);
    }
    EXPECT_EQ(a.transcripts, b.transcripts);
  }
}

TEST(Engine, PublicCoinChangesT2Transcripts) {
  const auto cfg = make(1000, 9, 4, 2, Coin::Public);
  const TestProtocol p(ProtocolKind::T2, cfg);
  const SeedNode rep(77);
  const Dataset data = sample_observations(cfg, Signal::zeros(4), rep.child("data"));
  EXPECT_NE(p.run_exact(data, SeedNode(1), rep).transcripts, p.run_exact(data, SeedNode(2), rep).transcripts);
}

TEST(Engine, ReplicationIsPureFunctionOfSeed) {
  const TestProtocol p(ProtocolKind::T3, make(1000, 8, 3, 8));
  const Signal f(std::vector<double>{0.1, 0.2, 0.0});
  for (auto e : {EngineKind::Exact, EngineKind::Fast}) {
    const Outcome a = p.run(f, SeedNode(3).child("rep", 4), e);
    const Outcome b = p.run(f, SeedNode(3).child("rep", 4), e);
    EXPECT_EQ(a.stats, b.stats);
    EXPECT_EQ(a.tie_u, b.tie_u);
  }
}

TEST(Engine, NullSimulationIndependentOfThreads) {
  const TestProtocol p(ProtocolKind::T2, make(10000, 32, 16, 4, Coin::Public));
  const auto a = simulate_null(p, 300, SeedNode(8), EngineKind::Exact, 1);
  const auto b = simulate_null(p, 300, SeedNode(8), EngineKind::Exact, 4);
  const auto c = simulate_null(p, 300, SeedNode(8), EngineKind::Exact, 8);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Engine, DecideIsOrOverSubtests) {
  Outcome o;
  o.stats = {0.1, std::nan("")};
  o.tie_u = 0.5;
  const std::vector<Threshold> th{{0.2, 0.0, 0.0}, {0.0, -1.0, 0.0}};
  EXPECT_FALSE(TestProtocol::decide(o, th));
  o.stats = {0.1, 0.3};
  EXPECT_TRUE(TestProtocol::decide(o, th));
  o.stats = {0.3, 0.3};
  EXPECT_TRUE(TestProtocol::decide(o, th));
  EXPECT_THROW(TestProtocol::decide(o, std::vector<Threshold>{th[0]}), ValidationError);
}

TEST(Engine, StrongSignalIsDetected) {
  // flat signal far above the public rate: every protocol rejects
  const auto cfg = make(10000, 64, 16, 4, Coin::Public);
  const TestProtocol p(ProtocolKind::T2, cfg);
  const Calibration cal = calibrate(p, 4000, SeedNode(1));
  const Signal f(std::vector<double>(16, 0.25));
  int rej = 0;
  for (int r = 0; r < 200; ++r) rej += TestProtocol::decide(p.run_fast(f, SeedNode(2).child("rep", r)), cal.thresholds);
  EXPECT_GT(rej, 190);
}

TEST(Engine, SpikeDetectedByPartitionTest) {
  const auto cfg = make(10000, 256, 16, 4);
  const TestProtocol p(ProtocolKind::T3, cfg);
  const Calibration cal = calibrate(p, 4000, SeedNode(1));
  std::vector<double> spike(16, 0.0);
  spike[3] = 0.5;
  int rej = 0;
  for (int r = 0; r < 200; ++r)
    rej += TestProtocol::decide(p.run_fast(Signal(spike), SeedNode(2).child("rep", r)), cal.thresholds);
  EXPECT_GT(rej, 190);
}
