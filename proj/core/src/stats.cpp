#include "distest/stats.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "distest/model.hpp"

namespace distest::stats {

namespace {

constexpr double kEps = 1e-17;
constexpr double kCfEps = 4e-16;
constexpr int kMaxIter = 1'000'000;

// lgamma(a) - [(a - 1/2) ln a - a + ln(2 pi)/2]
double stirling_error(double a) {
  if (a < 16.0) {
    return std::lgamma(a) - ((a - 0.5) * std::log(a) - a + 0.5 * std::log(2.0 * std::numbers::pi));
  }
  const double a2 = a * a;
  return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - (1.0 / 1680.0) / a2) / a2) / a2) / a;
}

// log of x^a e^{-x} / Gamma(a), written so that the large terms cancel analytically.
double log_gamma_prefactor(double a, double x) {
  const double t = (x - a) / a;
  const double deviance = (std::abs(t) < 0.5) ? (t - std::log1p(t)) : (x / a - 1.0 - std::log(x / a));
  return -a * deviance + 0.5 * std::log(a) - 0.5 * std::log(2.0 * std::numbers::pi) - stirling_error(a);
}

double gamma_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIter; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(log_gamma_prefactor(a, x));
}

// Continued fraction for Q(a, x), modified Lentz.
double gamma_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kCfEps) break;
  }
  return std::exp(log_gamma_prefactor(a, x)) * h;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0)) throw ValidationError("incomplete gamma requires a > 0");
  if (std::isnan(x)) return x;
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_continued_fraction(a, x);
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0)) throw ValidationError("incomplete gamma requires a > 0");
  if (std::isnan(x)) return x;
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_series(a, x);
  return gamma_continued_fraction(a, x);
}

double chi2_cdf(std::int64_t df, double x) {
  if (df < 1) throw ValidationError("chi-square degrees of freedom must be >= 1");
  if (x <= 0.0) return 0.0;
  return regularized_gamma_p(0.5 * static_cast<double>(df), 0.5 * x);
}

double chi2_sf(std::int64_t df, double x) {
  if (df < 1) throw ValidationError("chi-square degrees of freedom must be >= 1");
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(0.5 * static_cast<double>(df), 0.5 * x);
}

double chi2_quantile(std::int64_t df, double p) {
  if (df < 1) throw ValidationError("chi-square degrees of freedom must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("chi-square quantile level must lie in (0,1)");
  const double k = static_cast<double>(df);
  double lo = 0.0;
  double hi = k + 10.0 * std::sqrt(2.0 * k) + 50.0;
  while (chi2_cdf(df, hi) < p) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_cdf(df, mid) < p) lo = mid; else hi = mid;
  }
  return hi;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_gap_lower_bound(double x) { return std::min(x * x, 1.0) / 12.0; }

double chi2_tail_bound(std::int64_t df, double c) {
  if (!(c > 0.0)) throw ValidationError("chi-square tail bound requires c > 0");
  return std::exp(-static_cast<double>(df) * (c - 1.0 - std::log(c)) / 2.0);
}

double gauss_max_tail_bound(std::int64_t d, double x) {
  if (d < 1 || !(x > 0.0)) throw ValidationError("gaussian maximum bound requires d >= 1 and x > 0");
  return 2.0 * static_cast<double>(d) * std::exp(-x / 4.0);
}

double log_binomial_pmf(std::int64_t n, std::int64_t k, double p) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  double log_choose = std::lgamma(nd + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0);
  auto xlogy = [](double a, double y) { return a == 0.0 ? 0.0 : a * std::log(y); };
  return log_choose + xlogy(kd, p) + xlogy(nd - kd, 1.0 - p);
}

}  // namespace distest::stats
