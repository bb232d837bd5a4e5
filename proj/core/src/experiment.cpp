#include "distest/experiment.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "distest/parallel.hpp"
#include "distest/stats.hpp"

#ifndef DISTEST_VERSION_STRING
#define DISTEST_VERSION_STRING "unknown"
#endif

namespace distest {

namespace {

using json = nlohmann::ordered_json;

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void reject_unknown(const json& obj, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw ValidationError(std::string(where) + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ValidationError("unknown key '" + k + "' in " + std::string(where));
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
  }
}

json problem_json(const ProblemConfig& p) {
  return json{{"n", p.n}, {"m", p.m}, {"d", p.d}, {"b", p.b}, {"alpha", p.alpha}, {"coin", std::string(to_string(p.coin))}};
}

EngineKind engine_of(const ExperimentConfig& cfg) { return parse_engine(cfg.engine); }

ProtocolOptions protocol_options(const ExperimentConfig& cfg) {
  ProtocolOptions o;
  o.small_m_cutoff = cfg.small_m_cutoff;
  return o;
}

void require_protocol(const ExperimentConfig& cfg) {
  if (cfg.protocol.empty()) throw ValidationError("missing protocol name (T1, T1-local, T2, T3 or auto)");
}

void require_reps(std::int64_t reps) {
  if (reps < 1) throw ValidationError("reps must be >= 1");
}

SeedNode root(const ExperimentConfig& cfg) { return SeedNode(cfg.master_seed); }

std::string csv_line(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
  return out;
}

// Calibration for (protocol, cfg): table lookup, else calibrate when allowed.
Calibration obtain_calibration(const ExperimentConfig& cfg, const TestProtocol& protocol, std::ostream& log) {
  ThresholdTable table;
  if (!cfg.threshold_file.empty()) table = ThresholdTable::load(cfg.threshold_file);
  if (auto hit = table.find(protocol.name(), protocol.config())) return *hit;
  if (!cfg.auto_calibrate)
    throw ValidationError("no thresholds for " + ThresholdTable::key(protocol.name(), protocol.config()) +
                          "; run `calibrate` first or pass --auto-calibrate");
  log << "calibrating " << protocol.name() << " (" << protocol.config().fingerprint() << ")\n";
  Calibration cal =
      calibrate(protocol, cfg.null_reps, root(cfg).child("calibrate"), engine_of(cfg), cfg.threads);
  if (!cfg.threshold_file.empty()) {
    table.put(protocol.name(), protocol.config(), cal);
    table.save(cfg.threshold_file);
  }
  return cal;
}

json thresholds_json(const Calibration& cal) {
  json arr = json::array();
  for (const auto& t : cal.thresholds)
    arr.push_back(json{{"kappa", num(t.kappa)}, {"boundary", num(t.boundary)}, {"boundary_prob", t.boundary_prob}});
  return arr;
}

}  // namespace

std::string version_string() { return DISTEST_VERSION_STRING; }

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, "config",
                 {"problem", "protocol", "small_m_cutoff", "family", "rho2", "reps", "null_reps", "master_seed",
                  "engine", "threshold_file", "output", "threads", "auto_calibrate", "nonparam", "sweep", "diagnose"});
  if (!j.contains("master_seed")) throw ValidationError("master_seed is required");
  ExperimentConfig c;
  if (j.contains("problem")) {
    const auto& p = j.at("problem");
    reject_unknown(p, "problem", {"n", "m", "d", "b", "alpha", "coin"});
    read(p, "n", c.problem.n);
    read(p, "m", c.problem.m);
    read(p, "d", c.problem.d);
    read(p, "b", c.problem.b);
    read(p, "alpha", c.problem.alpha);
    std::string coin(to_string(c.problem.coin));
    read(p, "coin", coin);
    c.problem.coin = parse_coin(coin);
  }
  read(j, "protocol", c.protocol);
  read(j, "small_m_cutoff", c.small_m_cutoff);
  read(j, "family", c.family);
  read(j, "rho2", c.rho2);
  read(j, "reps", c.reps);
  read(j, "null_reps", c.null_reps);
  read(j, "master_seed", c.master_seed);
  read(j, "engine", c.engine);
  read(j, "threshold_file", c.threshold_file);
  read(j, "output", c.output);
  read(j, "threads", c.threads);
  read(j, "auto_calibrate", c.auto_calibrate);
  if (j.contains("nonparam")) {
    const auto& p = j.at("nonparam");
    reject_unknown(p, "nonparam",
                   {"enabled", "s", "R", "s_min", "s_max", "signals", "true_s", "multiplier", "threshold_constant",
                    "kappa_second", "calibrate_kappa_second", "level_predicate"});
    auto& s = c.nonparam;
    read(p, "enabled", s.enabled);
    read(p, "s", s.s);
    read(p, "R", s.R);
    read(p, "s_min", s.s_min);
    read(p, "s_max", s.s_max);
    read(p, "signals", s.signals);
    read(p, "true_s", s.true_s);
    read(p, "multiplier", s.multiplier);
    read(p, "threshold_constant", s.threshold_constant);
    read(p, "kappa_second", s.kappa_second);
    read(p, "calibrate_kappa_second", s.calibrate_kappa_second);
    read(p, "level_predicate", s.level_predicate);
  }
  if (j.contains("sweep")) {
    const auto& p = j.at("sweep");
    reject_unknown(p, "sweep", {"axis", "values", "target_risk", "range"});
    read(p, "axis", c.sweep.axis);
    read(p, "values", c.sweep.values);
    read(p, "target_risk", c.sweep.target_risk);
    read(p, "range", c.sweep.range);
  }
  if (j.contains("diagnose")) {
    const auto& p = j.at("diagnose");
    reject_unknown(p, "diagnose", {"kernels", "mc_samples", "batches", "bits_per_coord", "sigmas"});
    read(p, "kernels", c.diagnose.kernels);
    read(p, "mc_samples", c.diagnose.mc_samples);
    read(p, "batches", c.diagnose.batches);
    read(p, "bits_per_coord", c.diagnose.bits_per_coord);
    read(p, "sigmas", c.diagnose.sigmas);
  }
  validate_config(c.problem);
  parse_engine(c.engine);
  if (c.threads < 0) throw ValidationError("threads must be >= 0");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json(const ExperimentConfig& c, int indent) {
  const auto& np = c.nonparam;
  json j{{"problem", problem_json(c.problem)},
         {"protocol", c.protocol},
         {"small_m_cutoff", c.small_m_cutoff},
         {"family", c.family},
         {"rho2", c.rho2},
         {"reps", c.reps},
         {"null_reps", c.null_reps},
         {"master_seed", c.master_seed},
         {"engine", c.engine},
         {"threshold_file", c.threshold_file},
         {"output", c.output},
         {"threads", c.threads},
         {"auto_calibrate", c.auto_calibrate},
         {"nonparam",
          {{"enabled", np.enabled},
           {"s", np.s},
           {"R", np.R},
           {"s_min", np.s_min},
           {"s_max", np.s_max},
           {"signals", np.signals},
           {"true_s", np.true_s},
           {"multiplier", np.multiplier},
           {"threshold_constant", np.threshold_constant},
           {"kappa_second", np.kappa_second},
           {"calibrate_kappa_second", np.calibrate_kappa_second},
           {"level_predicate", np.level_predicate}}},
         {"sweep",
          {{"axis", c.sweep.axis},
           {"values", c.sweep.values},
           {"target_risk", c.sweep.target_risk},
           {"range", c.sweep.range}}},
         {"diagnose",
          {{"kernels", c.diagnose.kernels},
           {"mc_samples", c.diagnose.mc_samples},
           {"batches", c.diagnose.batches},
           {"bits_per_coord", c.diagnose.bits_per_coord},
           {"sigmas", c.diagnose.sigmas}}}};
  return indent > 0 ? j.dump(indent) : j.dump();
}

ExperimentConfig apply_overrides(ExperimentConfig cfg, const CliOverrides& o) {
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.reps) cfg.reps = *o.reps;
  if (o.threads) cfg.threads = *o.threads;
  if (o.out) cfg.output = *o.out;
  if (o.auto_calibrate) cfg.auto_calibrate = true;
  return cfg;
}

std::string output_header(const ExperimentConfig& cfg) {
  // threads never changes results, so it is left out of the embedded config
  ExperimentConfig shown = cfg;
  shown.threads = 0;
  return "# distest " + version_string() + "\n# seed " + std::to_string(cfg.master_seed) + "\n# config " +
         to_json(shown, 0) + "\n";
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

// ---------------------------------------------------------------- calibrate

Calibration cmd_calibrate(const ExperimentConfig& cfg, std::ostream& log) {
  require_protocol(cfg);
  validate_config(cfg.problem);
  if (cfg.threshold_file.empty()) throw ValidationError("threshold_file is required for calibrate");
  const ProtocolKind kind = resolve_protocol(cfg.protocol, cfg.problem, protocol_options(cfg));
  const TestProtocol protocol(kind, cfg.problem);
  Calibration cal = calibrate(protocol, cfg.null_reps, root(cfg).child("calibrate"), engine_of(cfg), cfg.threads);
  ThresholdTable table = ThresholdTable::load(cfg.threshold_file);
  table.put(protocol.name(), cfg.problem, cal);
  table.save(cfg.threshold_file);
  log << "calibrated " << protocol.name() << " (" << to_string(cal.method) << "), achieved level "
      << num(cal.achieved_level) << "\n";
  return cal;
}

// ---------------------------------------------------------------- run

namespace {

RunResult run_nonparam(const ExperimentConfig& cfg, std::ostream& log) {
  const SobolevBall ball{cfg.nonparam.s, cfg.nonparam.R};
  validate_ball(ball);
  const double rho = std::sqrt(cfg.rho2);
  const NonparamTest test(cfg.problem, ball, rho, protocol_options(cfg));
  const Calibration cal = obtain_calibration(cfg, test.protocol(), log);
  const EngineKind engine = engine_of(cfg);
  const SeedNode seed = root(cfg).child("risk");

  auto rejection_rate = [&](const LeveledSignal& f, const SeedNode& node, std::int64_t& max_bits) {
    std::vector<char> rej(static_cast<std::size_t>(cfg.reps));
    std::vector<std::int64_t> bits(static_cast<std::size_t>(cfg.reps));
    parallel_for(cfg.reps, cfg.threads, [&](std::int64_t r) {
      const Outcome out = test.run(f, node.child("rep", static_cast<std::uint64_t>(r)), engine);
      rej[r] = TestProtocol::decide(out, cal.thresholds);
      bits[r] = out.max_bits;
    });
    max_bits = std::max(max_bits, *std::max_element(bits.begin(), bits.end()));
    return static_cast<double>(std::count(rej.begin(), rej.end(), 1)) / static_cast<double>(cfg.reps);
  };

  RunResult res;
  res.protocol = std::string(test.protocol().name());
  res.rho2 = cfg.rho2;
  res.calibration = cal;
  res.report.reps = cfg.reps;
  res.report.type1 = rejection_rate(LeveledSignal::zeros(test.level()), seed.child("null-risk"),
                                    res.report.max_transcript_bits);
  for (const auto& name : cfg.nonparam.signals) {
    const AlternativeShape shape = parse_alternative_shape(name);
    const LeveledSignal f = make_sobolev_alternative(ball, rho, shape, seed.child("signal").child(name));
    res.report.type2_by_alternative[name] =
        1.0 - rejection_rate(f, seed.child(name), res.report.max_transcript_bits);
  }
  res.report.finalize();
  return res;
}

}  // namespace

RunResult cmd_run(const ExperimentConfig& cfg, std::ostream& log) {
  require_protocol(cfg);
  require_reps(cfg.reps);
  validate_config(cfg.problem);
  if (!(cfg.rho2 > 0.0)) throw ValidationError("rho2 must be > 0");

  RunResult res;
  ProblemConfig reported = cfg.problem;
  if (cfg.nonparam.enabled) {
    res = run_nonparam(cfg, log);
    reported.d = static_cast<int>(
        level_dimension(truncation_level(cfg.nonparam.s, std::sqrt(cfg.rho2))));
  } else {
    const ProtocolKind kind = resolve_protocol(cfg.protocol, cfg.problem, protocol_options(cfg));
    const TestProtocol protocol(kind, cfg.problem);
    res.protocol = std::string(protocol.name());
    res.rho2 = cfg.rho2;
    res.calibration = obtain_calibration(cfg, protocol, log);
    RunOptions run;
    run.engine = engine_of(cfg);
    run.threads = cfg.threads;
    res.report = estimate_risk(protocol, res.calibration, parse_family(cfg.family), std::sqrt(cfg.rho2), cfg.reps,
                               root(cfg).child("risk"), run);
  }
  const auto& rep = res.report;
  if (rep.max_transcript_bits > cfg.problem.b)
    throw std::logic_error("bit budget violated: " + std::to_string(rep.max_transcript_bits) + " > b");

  res.csv = output_header(cfg);
  res.csv += "protocol,n,m,d,b,coin,rho2,type1,type2_worst,risk,mc_radius,seed\n";
  res.csv += csv_line({res.protocol, std::to_string(reported.n), std::to_string(reported.m),
                       std::to_string(reported.d), std::to_string(reported.b), std::string(to_string(reported.coin)),
                       num(res.rho2), num(rep.type1), num(rep.worst_type2()), num(rep.worst_risk),
                       num(rep.mc_radius), std::to_string(cfg.master_seed)});

  json t2 = json::object();
  for (const auto& [k, v] : rep.type2_by_alternative) t2[k] = v;
  json j{{"version", version_string()},
         {"master_seed", cfg.master_seed},
         {"protocol", res.protocol},
         {"problem", problem_json(reported)},
         {"rho2", res.rho2},
         {"reps", rep.reps},
         {"type1", rep.type1},
         {"type2", t2},
         {"type2_worst", rep.worst_type2()},
         {"risk", rep.worst_risk},
         {"mc_radius", rep.mc_radius},
         {"max_transcript_bits", rep.max_transcript_bits},
         {"calibration",
          {{"method", std::string(to_string(res.calibration.method))},
           {"null_reps", res.calibration.null_reps},
           {"achieved_level", res.calibration.achieved_level},
           {"thresholds", thresholds_json(res.calibration)}}},
         {"config", json::parse(to_json(cfg, 0))}};
  j["config"]["threads"] = 0;
  res.json = j.dump(2) + "\n";
  return res;
}

// ---------------------------------------------------------------- sweep

SweepRun cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  require_protocol(cfg);
  validate_config(cfg.problem);
  SweepOptions opts;
  opts.protocol = cfg.protocol;
  opts.protocol_options = protocol_options(cfg);
  opts.null_reps = cfg.null_reps;
  opts.search.target_risk = cfg.sweep.target_risk;
  opts.search.range = cfg.sweep.range;
  opts.run.engine = engine_of(cfg);
  opts.run.threads = cfg.threads;
  const SweepAxis axis = parse_axis(cfg.sweep.axis);
  log << "sweeping " << to_string(axis) << " over " << cfg.sweep.values.size() << " values\n";

  SweepRun out;
  out.result = rate_sweep(cfg.problem, axis, cfg.sweep.values, parse_family(cfg.family), root(cfg).child("sweep"), opts);
  const auto& r = out.result;
  out.csv = output_header(cfg);
  out.csv +=
      "row,axis,value,protocol,empirical_rho2,rho2_lo,rho2_hi,theoretical_rho2,found,slope,intercept,slope_lo,"
      "slope_hi\n";
  const std::string ax(to_string(r.axis));
  for (const auto& p : r.points) {
    out.csv += csv_line({"point", ax, num(p.value), p.protocol, num(p.empirical_rho2), num(p.rho2_lo), num(p.rho2_hi),
                         num(p.theoretical_rho2), p.found ? "1" : "0", "", "", "", ""});
  }
  out.csv += csv_line({"summary", ax, "", "", "", "", "", "", "", num(r.fitted_slope), num(r.intercept),
                       num(r.slope_lo), num(r.slope_hi)});
  return out;
}

// ---------------------------------------------------------------- adaptive

AdaptiveRun cmd_adaptive(const ExperimentConfig& cfg, std::ostream& log) {
  require_reps(cfg.reps);
  validate_config(cfg.problem);
  const auto& np = cfg.nonparam;
  AdaptiveOptions opts;
  opts.threshold_constant = np.threshold_constant;
  opts.kappa_second = np.kappa_second;
  opts.level_predicate = np.level_predicate;
  AdaptiveTest test(cfg.problem, np.s_min, np.s_max, opts);
  const SeedNode seed = root(cfg).child("adaptive");
  const bool pub = cfg.problem.coin == Coin::Public;

  AdaptiveRun res;
  if (np.calibrate_kappa_second && !pub) {
    const double k = test.calibrate_kappa_second(cfg.null_reps, seed.child("calibrate"), cfg.threads);
    if (!std::isnan(k)) test.set_kappa_second(k);
  }
  res.kappa_second = test.options().kappa_second;
  const auto& grid = test.grid();
  const auto& sched = test.schedule();
  log << "adaptive grid: levels " << grid.levels.front() << ".." << grid.levels.back() << ", m'=" << sched.mprime
      << "\n";

  const auto reps = cfg.reps;
  struct Tally {
    double t1 = 0.0, second = 0.0, combined = 0.0;
  };
  std::int64_t max_bits = 0;
  const std::size_t nl = grid.levels.size();
  std::vector<double> sum_s1(nl, 0.0), sum_second(nl, 0.0), sum_s32(nl, 0.0);

  auto tally = [&](const LeveledSignal& f, const SeedNode& node, bool keep_stats) {
    std::vector<AdaptiveOutcome> outs(static_cast<std::size_t>(reps));
    parallel_for(reps, cfg.threads, [&](std::int64_t r) { outs[r] = test.run(f, node.child("rep", r)); });
    Tally t;
    for (const auto& o : outs) {
      const bool second = pub ? test.t2_decide(o) : test.t3_decide(o);
      t.t1 += test.t1_decide(o);
      t.second += second;
      t.combined += test.combined_decide(o);
      max_bits = std::max({max_bits, o.bits_t1, o.bits_t2, o.bits_t3});
      if (keep_stats) {
        for (std::size_t k = 0; k < nl; ++k) {
          sum_s1[k] += o.s1[k];
          sum_second[k] += pub ? o.s_public[k] : o.s31[k];
          sum_s32[k] += o.s32[k];
        }
      }
    }
    const double n = static_cast<double>(reps);
    t.t1 /= n;
    t.second /= n;
    t.combined /= n;
    return t;
  };

  const Tally null = tally(LeveledSignal::zeros(grid.levels.back()), seed.child("null"), true);
  res.type1_t1 = null.t1;
  res.type1_second = null.second;
  res.type1_combined = null.combined;
  for (std::size_t k = 0; k < nl; ++k) {
    AdaptiveLevelRow row;
    row.level = grid.levels[k];
    row.nu = level_dimension(row.level);
    row.mprime = static_cast<int>(sched.subsets[k].size());
    row.level_bits = sched.level_bits[k];
    row.null_mean_s1 = sum_s1[k] / static_cast<double>(reps);
    row.null_mean_second = sum_second[k] / static_cast<double>(reps);
    row.null_mean_s32 = sum_s32[k] / static_cast<double>(reps);
    res.levels.push_back(row);
  }

  const double inflate = std::pow(log_log(static_cast<double>(cfg.problem.n)), 0.25);
  for (double s : np.true_s) {
    if (s < np.s_min || s > np.s_max) throw ValidationError("true_s must lie in [s_min, s_max]");
    const double rho = np.multiplier * inflate * grid.rho_for(s);
    for (const auto& name : np.signals) {
      const AlternativeShape shape = parse_alternative_shape(name);
      const LeveledSignal f =
          make_sobolev_alternative(SobolevBall{s, np.R}, rho, shape, seed.child("signal").child(name).child(num(s)));
      const Tally t = tally(f, seed.child("alt").child(name).child(num(s)), false);
      res.rows.push_back(AdaptiveRow{s, name, rho, 1.0 - t.t1, 1.0 - t.second, 1.0 - t.combined});
    }
  }
  res.max_bits_per_subtest = max_bits;
  if (max_bits > cfg.problem.b) throw std::logic_error("bit budget violated by an adaptive subtest");

  const std::string coin(to_string(cfg.problem.coin));
  res.csv = output_header(cfg);
  res.csv += "kind,coin,level,nu,mprime,level_bits,true_s,signal,rho,err_t1,err_second,err_combined,mean_s1,"
             "mean_second,mean_s32\n";
  for (const auto& l : res.levels) {
    res.csv += csv_line({"level", coin, std::to_string(l.level), std::to_string(l.nu), std::to_string(l.mprime),
                         std::to_string(l.level_bits), "", "", "", "", "", "", num(l.null_mean_s1),
                         num(l.null_mean_second), num(l.null_mean_s32)});
  }
  res.csv += csv_line({"type1", coin, "", "", "", "", "", "", "", num(res.type1_t1), num(res.type1_second),
                       num(res.type1_combined), "", "", ""});
  for (const auto& r : res.rows) {
    res.csv += csv_line({"type2", coin, "", "", "", "", num(r.true_s), r.signal, num(r.rho), num(r.type2_t1),
                         num(r.type2_second), num(r.type2_combined), "", "", ""});
  }
  return res;
}

// ---------------------------------------------------------------- diagnose

DiagnoseRun cmd_diagnose(const ExperimentConfig& cfg, std::ostream& log) {
  validate_config(cfg.problem);
  const auto& dg = cfg.diagnose;
  if (dg.mc_samples < 1) throw ValidationError("diagnose.mc_samples must be >= 1");
  const SeedNode seed = root(cfg).child("diagnose");
  DiagnoseRun res;
  res.csv = output_header(cfg);
  res.csv +=
      "kernel,m,n,d,b,bits,trace,trace_bound,trace_slack,lambda_max,lambda_bound,lambda_slack,per_machine_trace,"
      "per_machine_trace_bound,status\n";
  const auto& p = cfg.problem;
  auto prefix = [&](const std::string& label, int bits) {
    return std::vector<std::string>{label, std::to_string(p.m), std::to_string(p.n), std::to_string(p.d),
                                    std::to_string(p.b), std::to_string(bits)};
  };
  for (const auto& name : dg.kernels) {
    const KernelKind kind = parse_kernel(name);
    std::optional<EncodeKernel> kernel;
    try {
      kernel.emplace(kind, p, seed.child("coin").child(name), dg.bits_per_coord);
    } catch (const ValidationError& e) {
      log << "refused " << name << ": " << e.what() << "\n";
      res.refused.push_back(name);
      auto cells = prefix(name, p.b);
      cells.insert(cells.end(), {"", "", "", "", "", "", "", "", "refused"});
      res.csv += csv_line(cells);
      continue;
    }
    if (!kernel->applicable()) {
      log << "skipped " << name << ": does not fit (d, b)\n";
      res.refused.push_back(name);
      auto cells = prefix(name, 0);
      cells.insert(cells.end(), {"", "", "", "", "", "", "", "", "not-applicable"});
      res.csv += csv_line(cells);
      continue;
    }
    const XiEstimate est =
        estimate_xi(*kernel, p, dg.mc_samples, seed.child("samples").child(name), dg.batches, cfg.threads);
    const DpiReport r = check_dpi(est, p, dg.sigmas);
    auto cells = prefix(kernel->label(), kernel->bits());
    cells.insert(cells.end(), {num(r.trace), num(r.trace_bound), num(r.trace_slack), num(r.lambda_max),
                               num(r.lambda_bound), num(r.lambda_slack), num(r.per_machine_trace),
                               num(r.per_machine_trace_bound), r.ok() ? "ok" : "violated"});
    res.csv += csv_line(cells);
    res.reports.push_back(r);
  }
  if (res.reports.empty()) throw ValidationError("no kernel could be diagnosed (alphabet too large or not applicable)");
  return res;
}

// ---------------------------------------------------------------- selftest

std::vector<SelftestCheck> cmd_selftest(std::uint64_t seed_value, int threads, std::ostream& log) {
  std::vector<SelftestCheck> checks;
  const SeedNode seed = SeedNode(seed_value).child("selftest");

  {
    SelftestCheck c{"normal-gap grid", true, ""};
    for (int i = -10000; i <= 10000; ++i) {
      const double x = i * 1e-3;
      const double gap = stats::normal_cdf(x) - 0.5;
      if (gap * gap < stats::normal_gap_lower_bound(x)) {
        c.passed = false;
        c.detail = "fails at x=" + num(x);
        break;
      }
    }
    if (c.passed) c.detail = "20001 grid points";
    checks.push_back(c);
  }

  constexpr std::int64_t kDraws = 100000;
  {
    const std::vector<std::int64_t> dfs{1, 2, 10, 100};
    const std::vector<double> cs{0.25, 0.5, 2.0, 4.0};
    std::vector<double> freq(dfs.size() * cs.size());
    parallel_for(static_cast<std::int64_t>(freq.size()), threads, [&](std::int64_t cell) {
      const auto df = dfs[cell / cs.size()];
      const double c = cs[cell % cs.size()];
      auto rng = seed.child("chi2-tail", static_cast<std::uint64_t>(cell)).stream();
      std::int64_t hits = 0;
      for (std::int64_t r = 0; r < kDraws; ++r) {
        const double x = rng.chi_square(static_cast<double>(df));
        hits += c < 1.0 ? (x <= c * df) : (x >= c * df);
      }
      freq[cell] = static_cast<double>(hits) / kDraws;
    });
    SelftestCheck chk{"chi-square tail bound", true, ""};
    for (std::size_t cell = 0; cell < freq.size(); ++cell) {
      const auto df = dfs[cell / cs.size()];
      const double c = cs[cell % cs.size()];
      const double bound = stats::chi2_tail_bound(df, c);
      const double p = std::min(bound, 1.0);
      const double slack = 3.0 * std::sqrt(p * (1.0 - p) / kDraws);
      if (freq[cell] > bound + slack) {
        chk.passed = false;
        chk.detail += "df=" + std::to_string(df) + " c=" + num(c) + " freq=" + num(freq[cell]) + " > " + num(bound) + "; ";
      }
    }
    if (chk.passed) chk.detail = "16 cells, 1e5 draws each";
    checks.push_back(chk);
  }

  {
    const std::vector<std::int64_t> ds{1, 4, 16, 64};
    const std::vector<double> xs{4.0, 8.0, 16.0, 32.0};
    std::vector<double> freq(ds.size() * xs.size());
    parallel_for(static_cast<std::int64_t>(freq.size()), threads, [&](std::int64_t cell) {
      const auto d = ds[cell / xs.size()];
      const double x = xs[cell % xs.size()];
      auto rng = seed.child("gauss-max", static_cast<std::uint64_t>(cell)).stream();
      std::int64_t hits = 0;
      for (std::int64_t r = 0; r < kDraws; ++r) {
        double mx = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
          const double z = rng.normal();
          mx = std::max(mx, z * z);
        }
        hits += mx >= x;
      }
      freq[cell] = static_cast<double>(hits) / kDraws;
    });
    SelftestCheck chk{"gaussian maximum bound", true, ""};
    for (std::size_t cell = 0; cell < freq.size(); ++cell) {
      const auto d = ds[cell / xs.size()];
      const double x = xs[cell % xs.size()];
      const double bound = stats::gauss_max_tail_bound(d, x);
      const double p = std::min(bound, 1.0);
      const double slack = 3.0 * std::sqrt(p * (1.0 - p) / kDraws);
      if (freq[cell] > bound + slack) {
        chk.passed = false;
        chk.detail += "d=" + std::to_string(d) + " x=" + num(x) + " freq=" + num(freq[cell]) + "; ";
      }
    }
    if (chk.passed) chk.detail = "16 cells, 1e5 draws each";
    checks.push_back(chk);
  }

  {
    // high-precision reference values of P(df/2, x/2)
    struct Ref {
      std::int64_t df;
      double x;
      double p;
    };
    const Ref refs[] = {{1, 1.0, 0.68268949213708589717},        {1, 0.01, 0.079655674554057963757},
                        {3, 7.8, 0.94966890214014664538},        {10, 2.0, 0.0036598468273437123455},
                        {10, 25.0, 0.9946544945128659357},       {64, 64.0, 0.52351169452374141096},
                        {100, 150.0, 0.99909606795764599091},    {1000, 950.0, 0.1308759342543115741},
                        {100000, 100500.0, 0.86814518839661622151}, {50000, 1e7, 1.0}};
    SelftestCheck chk{"chi-square cdf reference values", true, ""};
    double worst = 0.0;
    for (const auto& r : refs) {
      const double err = std::abs(stats::chi2_cdf(r.df, r.x) - r.p);
      worst = std::max(worst, err);
      if (!(err <= 1e-10)) {
        chk.passed = false;
        chk.detail += "df=" + std::to_string(r.df) + " x=" + num(r.x) + " err=" + num(err) + "; ";
      }
    }
    if (chk.passed) chk.detail = "max abs error " + num(worst);
    checks.push_back(chk);
  }

  {
    SelftestCheck chk{"chi-square cdf monotonicity", true, "df 1..64, x in [0, 200]"};
    for (std::int64_t df = 1; df <= 64 && chk.passed; ++df) {
      for (int i = 0; i <= 400; ++i) {
        const double x = 0.5 * i;
        const double v = stats::chi2_cdf(df, x);
        if (stats::chi2_cdf(df, x + 0.5) < v || (df > 1 && v > stats::chi2_cdf(df - 1, x))) {
          chk.passed = false;
          chk.detail = "fails at df=" + std::to_string(df) + " x=" + num(x);
          break;
        }
      }
    }
    checks.push_back(chk);
  }

  for (const auto& c : checks) log << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
  return checks;
}

}  // namespace distest
