#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "distest/infodiag.hpp"

using namespace distest;

namespace {

ProblemConfig make(std::int64_t n, int m, int d, int b) {
  ProblemConfig c;
  c.n = n;
  c.m = m;
  c.d = d;
  c.b = b;
  return c;
}

}  // namespace

TEST(Kernels, NamesAndBits) {
  for (auto k : {KernelKind::Constant, KernelKind::Sign, KernelKind::T1, KernelKind::T2, KernelKind::T32,
                 KernelKind::Quantizer})
    EXPECT_EQ(parse_kernel(to_string(k)), k);
  EXPECT_THROW(parse_kernel("lattice"), ValidationError);
  const auto cfg = make(1000, 10, 4, 2);
  EXPECT_EQ(EncodeKernel(KernelKind::Constant, cfg, SeedNode(1)).bits(), 0);
  EXPECT_EQ(EncodeKernel(KernelKind::Sign, cfg, SeedNode(1)).bits(), 2);
  EXPECT_EQ(EncodeKernel(KernelKind::T1, cfg, SeedNode(1)).bits(), 1);
  EXPECT_EQ(EncodeKernel(KernelKind::Quantizer, cfg, SeedNode(1)).label(), "quantizer-1");
  for (const auto& k : standard_kernels(cfg, SeedNode(1))) EXPECT_LE(k.bits(), cfg.b);
}

TEST(Kernels, CountingKernelNeedsMultiplicity) {
  // C = floor(2^b / (d + 1)) = 0 for b = 1, d = 2
  EXPECT_FALSE(EncodeKernel(KernelKind::T32, make(1000, 10, 2, 1), SeedNode(1)).applicable());
  EXPECT_TRUE(EncodeKernel(KernelKind::T32, make(1000, 10, 1, 1), SeedNode(1)).applicable());
}

TEST(Kernels, RefusesLargeAlphabet) {
  EXPECT_THROW(EncodeKernel(KernelKind::Sign, make(1000, 10, 32, 17), SeedNode(1)), ValidationError);
}

TEST(Xi, ConstantKernelIsZero) {
  const auto cfg = make(1000, 10, 3, 2);
  const auto est = estimate_xi(EncodeKernel(KernelKind::Constant, cfg, SeedNode(1)), cfg, 20000, SeedNode(2));
  // conditional mean equals the sample mean, O(sigma^2 d / N)
  EXPECT_LT(est.per_machine_trace, 10 * cfg.noise_sd() * cfg.noise_sd() * 3 / 20000.0);
  EXPECT_EQ(est.alphabet_size, 1);
}

TEST(Xi, SignKernelOneDimension) {
  // E[X | X > 0] = sigma sqrt(2/pi), so Xi = sigma^2 (2/pi)
  const auto cfg = make(10000, 64, 1, 1);
  const double s2 = 64.0 / 10000.0;
  const auto est = estimate_xi(EncodeKernel(KernelKind::Sign, cfg, SeedNode(1)), cfg, 1000000, SeedNode(3));
  EXPECT_NEAR(est.per_machine_trace, s2 * 2.0 / std::numbers::pi, 0.02 * s2);
  EXPECT_NEAR(est.trace, 64.0 * s2 * 2.0 / std::numbers::pi, 64 * 0.02 * s2);
  EXPECT_GT(est.trace_se, 0.0);
  EXPECT_EQ(est.groups_observed, 2);
}

TEST(Xi, QuantizerRefinementIncreasesTrace) {
  // equiprobable cells: more bits retain more of the variance, never above it
  const auto cfg = make(1000, 10, 1, 4);
  const double s2 = cfg.noise_sd() * cfg.noise_sd();
  double prev = 0.0;
  for (int k : {1, 2, 3, 4}) {
    const auto est = estimate_xi(EncodeKernel(KernelKind::Quantizer, cfg, SeedNode(1), k), cfg, 200000, SeedNode(k));
    EXPECT_GT(est.per_machine_trace, prev);
    EXPECT_LT(est.per_machine_trace, s2);
    prev = est.per_machine_trace;
  }
  EXPECT_GT(prev, 0.95 * s2);
}

TEST(Xi, DeterministicAcrossThreads) {
  const auto cfg = make(1000, 10, 4, 4);
  const EncodeKernel k(KernelKind::T2, cfg, SeedNode(1));
  const auto a = estimate_xi(k, cfg, 50000, SeedNode(2), 20, 1);
  const auto b = estimate_xi(k, cfg, 50000, SeedNode(2), 20, 4);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.lambda_max, b.lambda_max);
  EXPECT_EQ(a.trace_se, b.trace_se);
}

TEST(Xi, InputValidation) {
  const auto cfg = make(1000, 10, 2, 1);
  EXPECT_THROW(estimate_xi(EncodeKernel(KernelKind::T32, cfg, SeedNode(1)), cfg, 1000, SeedNode(2)), ValidationError);
  EXPECT_THROW(estimate_xi(EncodeKernel(KernelKind::Sign, cfg, SeedNode(1)), cfg, 5, SeedNode(2), 20), ValidationError);
}

TEST(Dpi, BoundsHoldForAllKernels) {
  for (int d : {1, 2, 4}) {
    for (int b : {1, 2, 4}) {
      const auto cfg = make(10000, 64, d, b);
      for (const auto& k : standard_kernels(cfg, SeedNode(7))) {
        const auto est = estimate_xi(k, cfg, 100000, SeedNode(8).child(k.label()));
        const DpiReport r = check_dpi(est, cfg);
        EXPECT_TRUE(r.ok()) << k.label() << " d=" << d << " b=" << b << " tr=" << r.trace << " bound=" << r.trace_bound;
        EXPECT_NEAR(r.lambda_bound, 64.0 / 10000.0, 1e-15);
        EXPECT_NEAR(r.trace_bound, std::min(2 * std::numbers::ln2 * b / d, 1.0) * 64 * 64 * d / 10000.0, 1e-12);
      }
    }
  }
}

TEST(Dpi, ViolationIsReported) {
  const auto cfg = make(10000, 64, 1, 1);
  XiEstimate fake;
  fake.trace = 10.0;
  fake.per_machine_trace = 10.0 / 64;
  fake.lambda_max = 1.0;
  const DpiReport r = check_dpi(fake, cfg);
  EXPECT_FALSE(r.trace_ok);
  EXPECT_FALSE(r.lambda_ok);
  EXPECT_FALSE(r.ok());
  EXPECT_LT(r.trace_margin(), 0.0);
}
