#include <gtest/gtest.h>

#include <cmath>

#include "distest/nonparametric.hpp"

using namespace distest;

namespace {

ProblemConfig make(std::int64_t n, int m, int b, Coin coin, double alpha = 0.1) {
  ProblemConfig c;
  c.n = n;
  c.m = m;
  c.d = 1;
  c.b = b;
  c.alpha = alpha;
  c.coin = coin;
  return c;
}

}  // namespace

TEST(Levels, DimensionAndTruncation) {
  EXPECT_EQ(level_dimension(0), 1);
  EXPECT_EQ(level_dimension(3), 15);
  EXPECT_THROW(level_dimension(-1), ValidationError);
  EXPECT_THROW(level_dimension(25), ValidationError);
  EXPECT_EQ(truncation_level(1.0, 0.01), 6);
  EXPECT_EQ(truncation_level(2.0, 0.01), 3);
  EXPECT_EQ(truncation_level(0.5, 0.25), 4);
  EXPECT_EQ(truncation_level(1.0, 0.9), 1);
  EXPECT_EQ(truncation_level(1.0, 3.0), 1);
  EXPECT_THROW(truncation_level(0.0, 0.1), ValidationError);
  EXPECT_THROW(truncation_level(1.0, 0.0), ValidationError);
}

TEST(LeveledSignal, NormsAndTail) {
  const LeveledSignal f({{1.0}, {0.0, 2.0}, {1.0, 0.0, 0.0, 1.0}});
  EXPECT_DOUBLE_EQ(f.squared_norm(), 7.0);
  // 1 + 4*4 + 16*2
  EXPECT_DOUBLE_EQ(f.sobolev_norm_squared(1.0), 49.0);
  EXPECT_DOUBLE_EQ(f.tail_squared_norm(1), 2.0);
  EXPECT_DOUBLE_EQ(f.tail_squared_norm(2), 0.0);
  const Signal t = f.truncated(1);
  ASSERT_EQ(t.size(), 3);
  EXPECT_DOUBLE_EQ(t[2], 2.0);
  const Signal padded = f.truncated(3);
  EXPECT_EQ(padded.size(), 15);
  EXPECT_DOUBLE_EQ(padded.squared_norm(), 7.0);
  EXPECT_THROW(LeveledSignal({{1.0}, {1.0}}), ValidationError);
  EXPECT_THROW(LeveledSignal(std::vector<std::vector<double>>{}), ValidationError);
  EXPECT_THROW(LeveledSignal(std::vector<std::vector<double>>{std::vector<double>{std::nan("")}}), ValidationError);
}

TEST(LeveledSignal, TailBoundedBySobolevNorm) {
  // ||f - f^L||^2 <= 2^{-2(L+1)s} sum_{l>L} 2^{2ls} ||f_l||^2
  const LeveledSignal f = make_sobolev_alternative({1.0, 1.0}, 0.05, AlternativeShape::RandomDirection, SeedNode(3));
  for (double s : {0.5, 1.0}) {
    for (int L = 0; L < f.max_level(); ++L) {
      EXPECT_LE(f.tail_squared_norm(L), std::exp2(-2.0 * (L + 1) * s) * f.sobolev_norm_squared(s) * (1 + 1e-12));
    }
  }
}

TEST(Rates, IntermediateBudgetExamples) {
  const SobolevBall ball{1.0, 2.0};
  EXPECT_EQ(nonparam_regime(65536, 64, 8, 1.0, Coin::Public), RateRegime::Intermediate);
  EXPECT_EQ(nonparam_regime(65536, 64, 8, 1.0, Coin::Private), RateRegime::Intermediate);
  EXPECT_NEAR(theoretical_rate_nonparam(65536, 64, 8, ball, Coin::Public), std::exp2(-17.5 * 2.0 / 3.0), 1e-15);
  EXPECT_NEAR(theoretical_rate_nonparam(65536, 64, 8, ball, Coin::Private), std::exp2(-19.0 * 2.0 / 3.5), 1e-15);
}

TEST(Rates, NonparamFullAndLowRegimes) {
  const SobolevBall ball{1.0, 1.0};
  // b >= n^{1/(2s+1/2)}: centralized rate n^{-2s/(2s+1/2)}
  EXPECT_EQ(nonparam_regime(65536, 64, 100, 1.0, Coin::Private), RateRegime::Full);
  EXPECT_NEAR(theoretical_rate_nonparam(65536, 64, 100, ball, Coin::Private), std::exp2(-16 * 0.8), 1e-15);
  // b = 1 < n^{0.4} / m^{1.2} at m = 16: low-budget, (n / sqrt m)^{-0.8}
  EXPECT_EQ(nonparam_regime(65536, 16, 1, 1.0, Coin::Public), RateRegime::Low);
  EXPECT_NEAR(theoretical_rate_nonparam(65536, 16, 1, ball, Coin::Public), std::exp2(-14 * 0.8), 1e-15);
  EXPECT_THROW(theoretical_rate_nonparam(0.5, 1, 1, ball, Coin::Public), ValidationError);
  EXPECT_THROW(theoretical_rate_nonparam(10, 1, 1, {0.0, 1.0}, Coin::Public), ValidationError);
}

TEST(Rates, PublicNeverSlowerThanPrivate) {
  for (double n : {1e3, 1e5, 1e7})
    for (double m : {4.0, 64.0, 1024.0})
      for (double b : {1.0, 4.0, 32.0})
        for (double s : {0.5, 1.0, 2.0}) {
          const SobolevBall ball{s, 1.0};
          EXPECT_LE(theoretical_rate_nonparam(n, m, b, ball, Coin::Public),
                    theoretical_rate_nonparam(n, m, b, ball, Coin::Private) * (1 + 1e-12));
        }
}

TEST(Alternatives, SobolevShapes) {
  const SobolevBall ball{1.0, 2.0};
  for (auto shape : {AlternativeShape::BoundaryFlat, AlternativeShape::LowFrequency,
                     AlternativeShape::RandomDirection}) {
    const LeveledSignal f = make_sobolev_alternative(ball, 0.05, shape, SeedNode(1));
    EXPECT_NEAR(f.l2_norm(), 0.05, 1e-12);
    EXPECT_LE(f.sobolev_norm(1.0), 2.0);
    EXPECT_EQ(parse_alternative_shape(to_string(shape)), shape);
  }
  const LeveledSignal flat = make_sobolev_alternative(ball, 0.05, AlternativeShape::BoundaryFlat, SeedNode(1));
  EXPECT_EQ(flat.max_level(), truncation_level(1.0, 0.05));
  EXPECT_DOUBLE_EQ(flat.tail_squared_norm(flat.max_level() - 1), flat.squared_norm());
  EXPECT_THROW(make_sobolev_alternative({1.0, 0.01}, 0.5, AlternativeShape::BoundaryFlat, SeedNode(1)),
               InfeasibleError);
  EXPECT_THROW(parse_alternative_shape("Bump"), ValidationError);
}

TEST(Sequence, ObservationsHaveReducedDimension) {
  const auto cfg = make(1000, 8, 4, Coin::Private);
  const LeveledSignal f = LeveledSignal::zeros(4);
  const Dataset d = sample_sequence_observations(cfg, f, 3, SeedNode(2));
  EXPECT_EQ(d.machines(), 8);
  EXPECT_EQ(d.dim(), 15);
  EXPECT_THROW(sample_sequence_observations(cfg, f, 5, SeedNode(2)), ValidationError);
}

TEST(NonparamTest, ReducesToLevelDimension) {
  const auto cfg = make(65536, 64, 8, Coin::Private);
  const NonparamTest t(cfg, {1.0, 2.0}, 0.05);
  EXPECT_EQ(t.level(), 4);
  EXPECT_EQ(t.reduced_config().d, 31);
  EXPECT_EQ(t.protocol().config().d, 31);
  EXPECT_EQ(t.protocol().kind(), choose_protocol(t.reduced_config()));
}

TEST(NonparamTest, DetectsLargeSignalKeepsLevel) {
  const auto cfg = make(65536, 64, 8, Coin::Public);
  const SobolevBall ball{1.0, 2.0};
  const double rho = std::sqrt(30 * theoretical_rate_nonparam(65536, 64, 8, ball, Coin::Public));
  const NonparamTest t(cfg, ball, rho);
  const Calibration cal = t.calibrate(4000, SeedNode(1), EngineKind::Fast);
  int null_rej = 0;
  int alt_rej = 0;
  const LeveledSignal zero = LeveledSignal::zeros(t.level());
  const LeveledSignal f = make_sobolev_alternative(ball, rho, AlternativeShape::BoundaryFlat, SeedNode(2));
  for (int r = 0; r < 400; ++r) {
    null_rej += run_nonparam_test(t, cal, zero, SeedNode(3).child("rep", r), EngineKind::Fast);
    alt_rej += run_nonparam_test(t, cal, f, SeedNode(4).child("rep", r), EngineKind::Fast);
  }
  EXPECT_LT(null_rej, 70);
  EXPECT_GT(alt_rej, 300);
}
