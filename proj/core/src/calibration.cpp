#include "distest/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "distest/parallel.hpp"
#include "distest/stats.hpp"

namespace distest {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Atoms must be sorted ascending and merged. Tail probabilities are summed
// from the top so the smallest atoms never pollute the comparison.
Threshold threshold_from_merged(const Atoms& atoms, double alpha, bool randomize) {
  Threshold t;
  if (atoms.empty()) return t;
  double tail = 0.0;
  std::size_t k = atoms.size();  // index of kappa atom; size() means "none"
  while (k > 0 && tail + atoms[k - 1].second <= alpha * (1.0 + 1e-12)) {
    tail += atoms[k - 1].second;
    --k;
  }
  t.kappa = k < atoms.size() ? atoms[k].first : kInf;
  if (k > 0) {
    t.boundary = atoms[k - 1].first;
    if (randomize) t.boundary_prob = std::clamp((alpha - tail) / atoms[k - 1].second, 0.0, 1.0);
  }
  return t;
}

double json_number(const json& j) {
  if (j.is_null()) return kInf;
  return j.get<double>();
}

json encode_number(double v) {
  if (std::isinf(v)) return nullptr;
  return v;
}

}  // namespace

std::string_view to_string(CalibrationMethod method) {
  return method == CalibrationMethod::ExactEnumeration ? "exact" : "monte_carlo";
}

Atoms merge_atoms(Atoms atoms) {
  std::sort(atoms.begin(), atoms.end());
  Atoms merged;
  for (const auto& [v, p] : atoms) {
    if (!merged.empty() && same_atom(merged.back().first, v)) {
      merged.back().second += p;
    } else {
      merged.emplace_back(v, p);
    }
  }
  return merged;
}

Threshold threshold_from_atoms(const Atoms& atoms, double alpha, bool randomize) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
  return threshold_from_merged(merge_atoms(atoms), alpha, randomize);
}

Threshold threshold_from_sample(std::vector<double> sample, double alpha, bool randomize) {
  if (sample.empty()) throw ValidationError("empty null sample");
  const double w = 1.0 / static_cast<double>(sample.size());
  Atoms atoms;
  atoms.reserve(sample.size());
  for (double v : sample) atoms.emplace_back(v, w);
  return threshold_from_atoms(std::move(atoms), alpha, randomize);
}

Atoms t1_null_atoms(std::int64_t m) {
  if (m < 1) throw ValidationError("m must be >= 1");
  Atoms atoms;
  atoms.reserve(static_cast<std::size_t>(m + 1));
  for (std::int64_t k = 0; k <= m; ++k)
    atoms.emplace_back(t1_statistic_from_count(k, m), std::exp(stats::log_binomial_pmf(m, k, 0.5)));
  return merge_atoms(std::move(atoms));
}

Calibration calibrate_exact_t1(std::int64_t m, double alpha, bool randomize) {
  if (m > 1'000'000) throw ValidationError("exact T1 calibration supports m <= 10^6");
  const Atoms atoms = t1_null_atoms(m);
  Calibration cal;
  cal.method = CalibrationMethod::ExactEnumeration;
  cal.thresholds = {threshold_from_merged(atoms, alpha, randomize)};
  const auto& t = cal.thresholds[0];
  for (const auto& [v, p] : atoms) {
    if (same_atom(v, t.boundary)) cal.achieved_level += p * t.boundary_prob;
    else if (v >= t.kappa || same_atom(v, t.kappa)) cal.achieved_level += p;
  }
  return cal;
}

Calibration calibrate_exact_t1_local(int d, double alpha) {
  if (d < 1) throw ValidationError("d must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
  Calibration cal;
  cal.method = CalibrationMethod::ExactEnumeration;
  const double dd = d;
  cal.thresholds = {Threshold{(stats::chi2_quantile(d, 1.0 - alpha) - dd) / std::sqrt(dd), -kInf, 0.0}};
  cal.achieved_level = alpha;
  return cal;
}

std::vector<std::vector<double>> simulate_null(const TestProtocol& protocol, std::int64_t reps, const SeedNode& seed,
                                               EngineKind engine, int threads) {
  if (reps < 1) throw ValidationError("null_reps must be >= 1");
  const Signal zero = Signal::zeros(protocol.config().d);
  const int parts = protocol.statistic_count();
  std::vector<std::vector<double>> stats(static_cast<std::size_t>(parts), std::vector<double>(reps));
  parallel_for(reps, threads, [&](std::int64_t r) {
    const Outcome out = protocol.run(zero, seed.child("null", static_cast<std::uint64_t>(r)), engine);
    for (int k = 0; k < parts; ++k) stats[k][r] = out.stats[k];
  });
  return stats;
}

Calibration calibrate_from_null(const std::vector<std::vector<double>>& null_stats, double alpha, bool randomize) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
  if (null_stats.empty() || null_stats[0].empty()) throw ValidationError("empty null sample");
  const std::size_t reps = null_stats[0].size();
  const double w = 1.0 / static_cast<double>(reps);
  Calibration cal;
  cal.method = CalibrationMethod::MonteCarlo;
  cal.null_reps = static_cast<std::int64_t>(reps);
  cal.thresholds.assign(null_stats.size(), Threshold{});

  std::vector<std::size_t> active;
  std::vector<Atoms> merged(null_stats.size());
  for (std::size_t k = 0; k < null_stats.size(); ++k) {
    if (std::isnan(null_stats[k][0])) continue;
    active.push_back(k);
    Atoms atoms;
    atoms.reserve(reps);
    for (double v : null_stats[k]) atoms.emplace_back(v, w);
    merged[k] = merge_atoms(std::move(atoms));
  }
  if (active.empty()) throw ValidationError("no active subtest to calibrate");

  auto union_rate = [&](const std::vector<Threshold>& ts) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t k : active) {
        if (ts[k].rejects(null_stats[k][r], 1.0)) {
          ++hits;
          break;
        }
      }
    }
    return static_cast<double>(hits) * w;
  };
  auto thresholds_at = [&](double level) {
    std::vector<Threshold> ts(null_stats.size());
    for (std::size_t k : active) ts[k] = threshold_from_merged(merged[k], level, false);
    return ts;
  };

  std::vector<Threshold> ts;
  if (active.size() == 1) {
    ts = thresholds_at(alpha);
  } else {
    double lo = 0.0;
    double hi = alpha;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (union_rate(thresholds_at(mid)) <= alpha) lo = mid; else hi = mid;
    }
    ts = thresholds_at(lo);
  }
  double level = union_rate(ts);

  if (randomize) {
    // reps where only the first active subtest's boundary atom could add a rejection
    const std::size_t k0 = active.front();
    std::size_t candidates = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      if (!same_atom(null_stats[k0][r], ts[k0].boundary)) continue;
      bool other = false;
      for (std::size_t k : active) {
        if (k != k0 && ts[k].rejects(null_stats[k][r], 1.0)) other = true;
      }
      if (!other) ++candidates;
    }
    if (candidates > 0) {
      const double q = static_cast<double>(candidates) * w;
      ts[k0].boundary_prob = std::clamp((alpha - level) / q, 0.0, 1.0);
      level += ts[k0].boundary_prob * q;
    }
  }
  cal.thresholds = std::move(ts);
  cal.achieved_level = level;
  cal.level_radius = 2.576 * std::sqrt(std::max(level * (1.0 - level), 1e-12) / static_cast<double>(reps));
  return cal;
}

Calibration calibrate_mc(const TestProtocol& protocol, double alpha, std::int64_t null_reps, const SeedNode& seed,
                         EngineKind engine, int threads, bool randomize) {
  if (null_reps < 1000) throw ValidationError("null_reps must be >= 1000 for Monte Carlo calibration");
  return calibrate_from_null(simulate_null(protocol, null_reps, seed, engine, threads), alpha, randomize);
}

Calibration calibrate(const TestProtocol& protocol, std::int64_t null_reps, const SeedNode& seed, EngineKind engine,
                      int threads) {
  const auto& cfg = protocol.config();
  switch (protocol.kind()) {
    case ProtocolKind::T1: return calibrate_exact_t1(cfg.m, cfg.alpha);
    case ProtocolKind::T1Local: return calibrate_exact_t1_local(cfg.d, cfg.alpha);
    default: return calibrate_mc(protocol, cfg.alpha, null_reps, seed, engine, threads);
  }
}

std::string ThresholdTable::key(std::string_view protocol, const ProblemConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << protocol << '|' << cfg.fingerprint() << "|alpha=" << cfg.alpha;
  return os.str();
}

void ThresholdTable::put(std::string_view protocol, const ProblemConfig& cfg, const Calibration& cal) {
  entries_[key(protocol, cfg)] = cal;
}

std::optional<Calibration> ThresholdTable::find(std::string_view protocol, const ProblemConfig& cfg) const {
  const auto it = entries_.find(key(protocol, cfg));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string ThresholdTable::to_json() const {
  json root = json::object();
  for (const auto& [k, cal] : entries_) {
    json ts = json::array();
    for (const auto& t : cal.thresholds) {
      ts.push_back({{"kappa", encode_number(t.kappa)},
                    {"boundary", std::isinf(t.boundary) ? json(nullptr) : json(t.boundary)},
                    {"boundary_prob", t.boundary_prob}});
    }
    root[k] = {{"method", std::string(to_string(cal.method))},
               {"null_reps", cal.null_reps},
               {"achieved_level", cal.achieved_level},
               {"level_radius", cal.level_radius},
               {"thresholds", ts}};
  }
  return root.dump(2) + "\n";
}

ThresholdTable ThresholdTable::from_json(const std::string& text) {
  ThresholdTable table;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("threshold file is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("threshold file must hold a JSON object");
  try {
    for (const auto& [k, v] : root.items()) {
      Calibration cal;
      cal.method = v.at("method").get<std::string>() == "exact" ? CalibrationMethod::ExactEnumeration
                                                                 : CalibrationMethod::MonteCarlo;
      cal.null_reps = v.at("null_reps").get<std::int64_t>();
      cal.achieved_level = v.at("achieved_level").get<double>();
      cal.level_radius = v.at("level_radius").get<double>();
      for (const auto& t : v.at("thresholds")) {
        Threshold th;
        th.kappa = json_number(t.at("kappa"));
        th.boundary = t.at("boundary").is_null() ? -kInf : t.at("boundary").get<double>();
        th.boundary_prob = t.at("boundary_prob").get<double>();
        cal.thresholds.push_back(th);
      }
      table.entries_[k] = cal;
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed threshold entry: ") + e.what());
  }
  return table;
}

ThresholdTable ThresholdTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) return {};
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void ThresholdTable::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write threshold file " + path);
  out << to_json();
}

}  // namespace distest
