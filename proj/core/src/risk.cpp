#include "distest/risk.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "distest/nonparametric.hpp"
#include "distest/parallel.hpp"

namespace distest {

namespace {

struct RejectionCount {
  std::int64_t rejections = 0;
  std::int64_t max_bits = 0;
};

RejectionCount count_rejections(const TestProtocol& protocol, const Calibration& cal, const Signal& f,
                                std::int64_t reps, const SeedNode& seed, const RunOptions& run) {
  std::vector<char> reject(static_cast<std::size_t>(reps), 0);
  std::vector<std::int64_t> bits(static_cast<std::size_t>(reps), 0);
  parallel_for(reps, run.threads, [&](std::int64_t r) {
    const Outcome out = protocol.run(f, seed.child("rep", static_cast<std::uint64_t>(r)), run.engine);
    reject[r] = TestProtocol::decide(out, cal.thresholds) ? 1 : 0;
    bits[r] = out.max_bits;
  });
  RejectionCount c;
  c.rejections = std::accumulate(reject.begin(), reject.end(), std::int64_t{0});
  c.max_bits = bits.empty() ? 0 : *std::max_element(bits.begin(), bits.end());
  return c;
}

void require_calibrated(const TestProtocol& protocol, const Calibration& cal) {
  if (static_cast<int>(cal.thresholds.size()) != protocol.statistic_count()) {
    throw ValidationError("protocol " + std::string(protocol.name()) + " is not calibrated for this config");
  }
}

}  // namespace

std::string_view to_string(AlternativeKind kind) {
  switch (kind) {
    case AlternativeKind::Flat: return "Flat";
    case AlternativeKind::Spike: return "Spike";
    case AlternativeKind::RandomSphere: return "RandomSphere";
    case AlternativeKind::HalfFlat: return "HalfFlat";
  }
  return "?";
}

AlternativeKind parse_alternative(std::string_view text) {
  if (text == "Flat") return AlternativeKind::Flat;
  if (text == "Spike") return AlternativeKind::Spike;
  if (text == "RandomSphere") return AlternativeKind::RandomSphere;
  if (text == "HalfFlat") return AlternativeKind::HalfFlat;
  throw ValidationError("unknown alternative '" + std::string(text) +
                        "' (expected Flat, Spike, RandomSphere, HalfFlat)");
}

AlternativeFamily parse_family(const std::vector<std::string>& names) {
  if (names.empty()) throw ValidationError("alternative family must not be empty");
  AlternativeFamily fam;
  fam.members.clear();
  for (const auto& n : names) fam.members.push_back(parse_alternative(n));
  return fam;
}

Signal make_alternative(AlternativeKind kind, int d, double rho, const SeedNode& seed) {
  if (d < 1) throw ValidationError("d must be >= 1");
  if (!(rho >= 0.0)) throw ValidationError("rho must be >= 0");
  std::vector<double> v(static_cast<std::size_t>(d), 0.0);
  switch (kind) {
    case AlternativeKind::Flat: std::fill(v.begin(), v.end(), 1.0); break;
    case AlternativeKind::Spike: v[0] = 1.0; break;
    case AlternativeKind::HalfFlat: std::fill(v.begin(), v.begin() + std::max(1, d / 2), 1.0); break;
    case AlternativeKind::RandomSphere: {
      auto rng = seed.stream();
      for (auto& x : v) x = rng.normal();
      break;
    }
  }
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double scale = rho / std::sqrt(sq);
  for (auto& x : v) x *= scale;
  return Signal(std::move(v));
}

double estimate_type1(const TestProtocol& protocol, const Calibration& cal, std::int64_t reps, const SeedNode& seed,
                      const RunOptions& run, std::int64_t* max_bits) {
  require_calibrated(protocol, cal);
  if (reps < 1) throw ValidationError("reps must be >= 1");
  const auto c = count_rejections(protocol, cal, Signal::zeros(protocol.config().d), reps, seed.child("null-risk"), run);
  if (max_bits) *max_bits = std::max(*max_bits, c.max_bits);
  return static_cast<double>(c.rejections) / static_cast<double>(reps);
}

double estimate_worst_type2(const TestProtocol& protocol, const Calibration& cal, const AlternativeFamily& family,
                            double rho, std::int64_t reps, const SeedNode& seed, const RunOptions& run,
                            std::int64_t* max_bits) {
  require_calibrated(protocol, cal);
  if (reps < 1) throw ValidationError("reps must be >= 1");
  double worst = 0.0;
  for (auto kind : family.members) {
    const std::string label(to_string(kind));
    const Signal f = make_alternative(kind, protocol.config().d, rho, seed.child("direction"));
    const auto c = count_rejections(protocol, cal, f, reps, seed.child(label), run);
    if (max_bits) *max_bits = std::max(*max_bits, c.max_bits);
    worst = std::max(worst, 1.0 - static_cast<double>(c.rejections) / static_cast<double>(reps));
  }
  return worst;
}

RiskReport estimate_risk(const TestProtocol& protocol, const Calibration& cal, const AlternativeFamily& family,
                         double rho, std::int64_t reps, const SeedNode& seed, const RunOptions& run) {
  require_calibrated(protocol, cal);
  if (reps < 1) throw ValidationError("reps must be >= 1");
  if (family.members.empty()) throw ValidationError("alternative family must not be empty");
  RiskReport report;
  report.reps = reps;
  report.type1 = estimate_type1(protocol, cal, reps, seed, run, &report.max_transcript_bits);
  for (auto kind : family.members) {
    const std::string label(to_string(kind));
    const Signal f = make_alternative(kind, protocol.config().d, rho, seed.child("direction"));
    const auto c = count_rejections(protocol, cal, f, reps, seed.child(label), run);
    report.max_transcript_bits = std::max(report.max_transcript_bits, c.max_bits);
    report.type2_by_alternative[label] = 1.0 - static_cast<double>(c.rejections) / static_cast<double>(reps);
  }
  report.finalize();
  return report;
}

double ThresholdResult::rho() const { return std::sqrt(rho2); }

ThresholdResult find_threshold(const TestProtocol& protocol, const Calibration& cal, const AlternativeFamily& family,
                               const SeedNode& seed, const ThresholdSearchOptions& opts, const RunOptions& run) {
  require_calibrated(protocol, cal);
  if (!(opts.range > 1.0) || !(opts.stop_ratio > 1.0)) throw ValidationError("search range and stop ratio must be > 1");
  ThresholdResult res;
  res.type1 = estimate_type1(protocol, cal, opts.type1_reps, seed.child("type1"), run);
  if (!(opts.target_risk > res.type1 && opts.target_risk < 1.0)) {
    res.message = "target risk must lie in (type1, 1)";
    return res;
  }
  const double rate = theoretical_rate_finite(protocol.config());
  double lo = rate / opts.range;
  double hi = rate * opts.range;
  const SeedNode alt = seed.child("alternatives");
  auto risk_at = [&](double rho2, std::int64_t reps) {
    const double r = res.type1 + estimate_worst_type2(protocol, cal, family, std::sqrt(rho2), reps, alt, run);
    res.steps.push_back({rho2, r, reps});
    return r;
  };
  double risk_lo = risk_at(lo, opts.coarse_reps);
  if (risk_lo <= opts.target_risk) {
    res.message = "risk already below target at the lower end of the search range";
    res.rho2_lo = res.rho2_hi = res.rho2 = lo;
    return res;
  }
  double risk_hi = risk_at(hi, opts.coarse_reps);
  if (risk_hi > opts.target_risk) {
    res.message = "no crossing in range: risk above target at the upper end";
    res.rho2_lo = res.rho2_hi = res.rho2 = hi;
    return res;
  }
  for (int step = 0; step < opts.max_steps && hi / lo > opts.stop_ratio; ++step) {
    const double mid = std::sqrt(lo * hi);
    const std::int64_t reps = hi / lo > opts.fine_ratio ? opts.coarse_reps : opts.fine_reps;
    const double r = risk_at(mid, reps);
    if (r > opts.target_risk) {
      lo = mid;
      risk_lo = r;
    } else {
      hi = mid;
      risk_hi = r;
    }
  }
  res.found = true;
  res.rho2_lo = lo;
  res.rho2_hi = hi;
  // crossing interpolated linearly in log rho^2 inside the final bracket
  const double w = risk_lo > risk_hi ? (risk_lo - opts.target_risk) / (risk_lo - risk_hi) : 0.5;
  res.rho2 = lo * std::pow(hi / lo, std::clamp(w, 0.0, 1.0));
  return res;
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::D: return "d";
    case SweepAxis::M: return "m";
    case SweepAxis::N: return "n";
    case SweepAxis::B: return "b";
  }
  return "?";
}

SweepAxis parse_axis(std::string_view text) {
  if (text == "d") return SweepAxis::D;
  if (text == "m") return SweepAxis::M;
  if (text == "n") return SweepAxis::N;
  if (text == "b") return SweepAxis::B;
  throw ValidationError("sweep axis must be one of d, m, n, b");
}

ProblemConfig with_axis(ProblemConfig cfg, SweepAxis axis, double value) {
  if (!(value >= 1.0) || value != std::floor(value)) throw ValidationError("sweep values must be positive integers");
  switch (axis) {
    case SweepAxis::D: cfg.d = static_cast<int>(value); break;
    case SweepAxis::M: cfg.m = static_cast<int>(value); break;
    case SweepAxis::N: cfg.n = static_cast<std::int64_t>(value); break;
    case SweepAxis::B: cfg.b = static_cast<int>(value); break;
  }
  validate_config(cfg);
  return cfg;
}

double student_t975(int dof) {
  static constexpr double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                     2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086};
  if (dof < 1) return std::numeric_limits<double>::infinity();
  if (dof <= 20) return table[dof - 1];
  return 1.96 + 2.4 / dof;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("line fit needs at least two paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw ValidationError("line fit needs distinct x values");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - fit.intercept - fit.slope * x[i];
      rss += e * e;
    }
    fit.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  }
  return fit;
}

SweepResult rate_sweep(const ProblemConfig& base, SweepAxis axis, std::vector<double> values,
                       const AlternativeFamily& family, const SeedNode& seed, const SweepOptions& opts) {
  if (values.size() < 3) throw ValidationError("a sweep needs at least 3 axis values");
  std::sort(values.begin(), values.end());
  SweepResult result;
  result.axis = axis;
  for (double v : values) {
    const ProblemConfig cfg = with_axis(base, axis, v);
    const ProtocolKind kind = resolve_protocol(opts.protocol, cfg, opts.protocol_options);
    const TestProtocol proto(kind, cfg);
    const Calibration cal = calibrate(proto, opts.null_reps, seed.child("calibrate"), opts.run.engine, opts.run.threads);
    const ThresholdResult th = find_threshold(proto, cal, family, seed.child("search"), opts.search, opts.run);
    SweepPoint p;
    p.value = v;
    p.found = th.found;
    p.empirical_rho2 = th.rho2;
    p.rho2_lo = th.rho2_lo;
    p.rho2_hi = th.rho2_hi;
    p.theoretical_rho2 = theoretical_rate_finite(cfg);
    p.protocol = std::string(proto.name());
    result.points.push_back(p);
  }
  std::vector<double> lx;
  std::vector<double> ly;
  for (const auto& p : result.points) {
    if (!p.found) continue;
    lx.push_back(std::log(p.value));
    ly.push_back(std::log(p.empirical_rho2));
  }
  if (lx.size() >= 2) {
    const LineFit fit = fit_line(lx, ly);
    result.fitted_slope = fit.slope;
    result.intercept = fit.intercept;
    const double t = student_t975(static_cast<int>(lx.size()) - 2);
    result.slope_lo = fit.slope - t * fit.slope_se;
    result.slope_hi = fit.slope + t * fit.slope_se;
  } else {
    result.fitted_slope = result.slope_lo = result.slope_hi = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

}  // namespace distest
