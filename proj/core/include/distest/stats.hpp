#pragma once

// Special functions and closed-form probability bounds.

#include <cstdint>

namespace distest::stats {

/// Regularized lower incomplete gamma P(a, x); series below x = a + 1,
/// continued fraction above.
double regularized_gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed directly.
double regularized_gamma_q(double a, double x);

/// Chi-square cdf with `df` degrees of freedom. Returns 0 for x <= 0.
double chi2_cdf(std::int64_t df, double x);
/// Upper tail P(chi2_df > x).
double chi2_sf(std::int64_t df, double x);
/// Smallest x with chi2_cdf(df, x) >= p, for p in (0, 1).
double chi2_quantile(std::int64_t df, double p);

double normal_cdf(double x);

/// (1/12) min(x^2, 1): lower bound on (Phi(x) - 1/2)^2.
double normal_gap_lower_bound(double x);

/// exp(-df (c - 1 - ln c) / 2): bound on P(X <= c df) for c < 1 and on
/// P(X >= c df) for c > 1, X ~ chi2_df.
double chi2_tail_bound(std::int64_t df, double c);

/// 2 d exp(-x / 4): bound on P(max_i Z_i^2 >= x) for d iid standard normals.
double gauss_max_tail_bound(std::int64_t d, double x);

/// log of the Binomial(n, p) probability mass at k.
double log_binomial_pmf(std::int64_t n, std::int64_t k, double p);

}  // namespace distest::stats
