#include "actguard/cli.hpp"

#include "actguard/bench.hpp"
#include "actguard/conformal.hpp"
#include "actguard/episodeio.hpp"
#include "actguard/evalstats.hpp"
#include "actguard/monitors.hpp"
#include "actguard/stream.hpp"
#include "actguard/synthpolicies.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>

namespace actguard {

namespace {

using json = nlohmann::ordered_json;

struct CalibrateArgs {
  std::string demos, out, report, holdout, monitor_config;
  double alpha = 0.05;
  double split_ratio = 0.8;
  double velocity_percentile = 99.0;
  double sigma_k = 4.0;
  std::uint64_t seed = 0;
};

struct MonitorArgs {
  std::string contract, violations, cusum_log;
  double cusum_h = 5.0;
  std::optional<double> alpha;
  bool fail_closed = false;
};

struct MetricsArgs {
  std::string episodes, config, out, contract;
};

struct EvaluateArgs {
  std::string metrics, out, text;
  std::uint64_t seed = 0;
  std::vector<std::string> fisher;
  int n_boot = 1000;
  double level = 0.95;
};

struct SimulateArgs {
  std::string family, out, demos_out, manifest, config;
  std::optional<int> n;
  std::optional<double> failure_rate;
  std::optional<double> intensity;
  std::uint64_t seed = 0;
  int n_demos = 30;
};

struct BenchArgs {
  int dims = 14;
  std::size_t steps = 100000;
  std::size_t warmup = 1000;
  std::uint64_t seed = 0;
};

std::ofstream open_log(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError(path + ": cannot open for writing");
  return f;
}

// ---------------------------------------------------------------- calibrate

int run_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const Dataset demos = read_episodes(a.demos);
  if (demos.episodes.empty()) throw DataError(a.demos + ": no episodes");
  CalibrationConfig cfg;
  cfg.alpha = a.alpha;
  cfg.split_ratio = a.split_ratio;
  cfg.velocity_percentile = a.velocity_percentile;
  cfg.seed = a.seed;
  const std::span<const Episode> eps(demos.episodes);
  auto result = split_calibrate(eps, cfg);
  const SafetyContractd sigma = sigma_bounds(eps, a.sigma_k, a.velocity_percentile);

  std::vector<std::string> warnings = result.warnings;
  double coverage = 0.0;
  std::string holdout_source;
  if (!a.holdout.empty()) {
    const Dataset hold = read_episodes(a.holdout);
    coverage = holdout_coverage<double>(result.contract, hold.episodes);
    holdout_source = a.holdout;
  } else {
    std::vector<Episode> cal;
    for (auto i : result.calibration_episodes) cal.push_back(demos.episodes[i]);
    coverage = holdout_coverage<double>(result.contract, cal);
    holdout_source = "calibration_split";
  }
  const double ratio = width_ratio(result.contract, sigma, &warnings);

  write_contract(result.contract, a.out);
  if (!a.monitor_config.empty()) {
    write_text_file(a.monitor_config, monitor_config_to_json(calibrate_monitor_config(eps)));
  }

  json r;
  r["alpha"] = a.alpha;
  r["n_cal"] = result.n_cal;
  r["quantile_level"] = result.quantile_level;
  r["score_quantile"] = result.score_quantile;
  r["holdout_coverage"] = coverage;
  r["width_ratio_vs_4sigma"] = ratio;
  r["sigma_k"] = a.sigma_k;
  r["holdout_source"] = holdout_source;
  r["rank"] = result.rank;
  r["quantile_capped"] = result.quantile_capped;
  r["warnings"] = warnings;
  const std::string text = r.dump(2) + "\n";
  if (a.report.empty()) {
    out << text;
  } else {
    write_text_file(a.report, text);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- monitor

int run_monitor(const MonitorArgs& a, std::istream& in, std::ostream& out, std::ostream& err) {
  const SafetyContractd contract = read_contract(a.contract);
  double alpha = 0.05;
  if (a.alpha) {
    alpha = *a.alpha;
  } else if (const auto it = contract.calibration.find("alpha"); it != contract.calibration.end()) {
    alpha = it->second;
  }
  if (!a.cusum_log.empty() && !contract.score_model) {
    throw ConfigError("--cusum-log needs a contract with calibration scores (produced by calibrate)");
  }
  StreamMonitor<double> monitor(contract, MonitorConfig{}, alpha, a.cusum_h);
  const Eigen::Index D = contract.dims;

  std::ofstream vlog, clog;
  if (!a.violations.empty()) {
    vlog = open_log(a.violations);
    vlog << violation_log_header() << '\n';
  }
  if (!a.cusum_log.empty()) {
    clog = open_log(a.cusum_log);
    clog << json{{"format", "actguard-cusum"}, {"version", 1}}.dump() << '\n';
  }

  VectorXd raw(D), safe(D);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = "stdin line " + std::to_string(lineno) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw DataError(where + "expected {\"t\": int, \"a\": [...]}");
    if (j.size() == 1 && j.contains("reset")) {
      if (j["reset"] != true) throw DataError(where + "reset must be true");
      monitor.reset();
      out << line << '\n' << std::flush;
      continue;
    }
    if (j.size() != 2 || !j.contains("t") || !j.contains("a")) {
      throw DataError(where + "expected exactly the keys \"t\" and \"a\"");
    }
    if (!j["t"].is_number_integer()) throw DataError(where + "t: expected integer");
    const auto t = j["t"].get<std::int64_t>();
    const json& arr = j["a"];
    if (!arr.is_array()) throw DataError(where + "a: expected array");
    if (static_cast<Eigen::Index>(arr.size()) != D) {
      throw DataError(where + "a has " + std::to_string(arr.size()) + " components, contract expects " +
                      std::to_string(D));
    }
    for (Eigen::Index d = 0; d < D; ++d) {
      const json& v = arr[static_cast<std::size_t>(d)];
      if (!v.is_number()) throw DataError(where + "a[" + std::to_string(d) + "]: expected number");
      raw[d] = v.get<double>();
    }

    const std::size_t before = monitor.guard().violation_log().size();
    StreamStep step;
    try {
      step = monitor.step(raw, safe);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }

    if (vlog.is_open()) {
      const auto log = monitor.guard().violation_log();
      for (std::size_t k = before; k < log.size(); ++k) vlog << violation_to_json(log[k]) << '\n';
    }
    if (clog.is_open()) {
      json c;
      c["t"] = t;
      c["score"] = *step.score;
      c["p"] = *step.p;
      c["s"] = step.cusum;
      c["alarmed"] = step.alarmed;
      clog << c.dump() << '\n';
    }
    if (a.fail_closed && step.alarmed) {
      err << "actguard: alarm at stdin line " << lineno << " (t=" << t << "); fail-closed, output stopped\n";
      break;
    }
    if ((safe.array() == raw.array()).all()) {
      out << line << '\n';
    } else {
      json o;
      o["t"] = t;
      o["a"] = std::vector<double>(safe.data(), safe.data() + D);
      out << o.dump() << '\n';
    }
    out.flush();
  }
  return kExitOk;
}

// ---------------------------------------------------------------- metrics

int run_metrics(const MetricsArgs& a) {
  const Dataset ds = read_episodes(a.episodes);
  const MonitorConfig cfg = a.config.empty() ? MonitorConfig{} : read_monitor_config(a.config);
  std::optional<SafetyGuardd> guard;
  if (!a.contract.empty()) {
    guard.emplace(read_contract(a.contract));
    if (ds.dims && *ds.dims != guard->dims()) {
      throw DataError("episodes have " + std::to_string(*ds.dims) + " dims, contract has " +
                      std::to_string(guard->dims()));
    }
  }

  MetricsTable table;
  for (std::size_t k = 0; k < kAllMetrics.size(); ++k) {
    table.present[k] = kAllMetrics[k] != Metric::velocity_violations || guard.has_value();
  }
  for (const auto& ep : ds.episodes) {
    std::optional<std::int64_t> vv;
    if (guard) {
      guard->reset();
      std::int64_t n = 0;
      for (Eigen::Index t = 0; t < ep.length(); ++t) {
        for (const auto& rec : guard->enforce(ep.actions.row(t).transpose()).violations) {
          n += rec.kind == ViolationKind::velocity ? 1 : 0;
        }
      }
      vv = n;
    }
    MetricsRow row;
    row.episode_id = ep.episode_id;
    row.family = ep.family;
    row.success = ep.success;
    row.health = episode_health(ep.actions, cfg, vv);
    table.rows.push_back(std::move(row));
  }
  write_metrics(table, std::filesystem::path(a.out));
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

FisherTest parse_fisher(const std::string& spec, std::size_t index) {
  FisherTest f;
  std::string body = spec;
  if (const auto colon = spec.find(':'); colon != std::string::npos) {
    f.label = spec.substr(0, colon);
    body = spec.substr(colon + 1);
  } else {
    f.label = "table_" + std::to_string(index + 1);
  }
  std::vector<std::int64_t> v;
  std::stringstream ss(body);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    long long x = 0;
    try {
      x = std::stoll(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size() || x < 0) {
      throw ConfigError("--fisher '" + spec + "': expected four non-negative integers a,b,c,d");
    }
    v.push_back(x);
  }
  if (v.size() != 4) throw ConfigError("--fisher '" + spec + "': expected four non-negative integers a,b,c,d");
  f.table = {v[0], v[1], v[2], v[3]};
  return f;
}

int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  EvaluationConfig cfg;
  cfg.n_boot = a.n_boot;
  cfg.level = a.level;
  cfg.seed = a.seed;
  for (std::size_t i = 0; i < a.fisher.size(); ++i) cfg.fisher.push_back(parse_fisher(a.fisher[i], i));
  if (cfg.n_boot < 100) throw ConfigError("--n-boot must be at least 100");
  if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw ConfigError("--level must lie in (0, 1)");

  EvaluationReport report;
  if (a.metrics.empty()) {
    if (cfg.fisher.empty()) throw ConfigError("evaluate needs --metrics or at least one --fisher table");
    for (auto f : cfg.fisher) {
      f.p = fisher_exact_two_sided(f.table);
      report.fisher_tests.push_back(std::move(f));
    }
    report.n_boot = cfg.n_boot;
    report.level = cfg.level;
    report.seed = cfg.seed;
    report.overall.group = "all";
  } else {
    report = evaluation_report(read_metrics(std::filesystem::path(a.metrics)), cfg);
  }
  write_text_file(a.out, report_to_json(report));
  const std::string text = report_to_text(report);
  if (a.text.empty()) {
    out << text;
  } else {
    write_text_file(a.text, text);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

int run_simulate(const SimulateArgs& a) {
  SynthSettings settings = a.config.empty() ? default_synth_settings() : read_synth_settings(a.config);
  BenchmarkSpec spec = settings.benchmark;
  spec.seed = a.seed;
  if (a.n) spec.n_per_family = *a.n;
  if (a.failure_rate) spec.failure_rate = *a.failure_rate;
  if (a.intensity) spec.intensity = *a.intensity;
  if (a.family != "all") {
    const auto fam = parse_family(a.family);
    if (!fam) throw ConfigError("--family: expected discrete, smooth, chunked or all");
    std::vector<FamilyConfig> keep;
    for (const auto& f : spec.families) {
      if (f.family == *fam) keep.push_back(f);
    }
    if (keep.empty()) keep.push_back(default_family_config(*fam));
    spec.families = keep;
  }
  spec.validate();

  std::string family_list;
  for (const auto& f : spec.families) family_list += (family_list.empty() ? "" : ",") + std::string(to_string(f.family));

  Dataset ds;
  ds.episodes = generate_benchmark(spec);
  ds.manifest = {{"generator", "actguard-simulate"},
                 {"families", family_list},
                 {"n_per_family", std::to_string(spec.n_per_family)},
                 {"failure_rate", format_double(spec.failure_rate)},
                 {"mixture", format_double(spec.mixture[0]) + "," + format_double(spec.mixture[1]) + "," +
                                 format_double(spec.mixture[2])},
                 {"intensity", format_double(spec.intensity)},
                 {"seed", std::to_string(spec.seed)}};
  write_episodes(ds, std::filesystem::path(a.out));

  if (!a.demos_out.empty()) {
    Dataset demos;
    for (const auto& f : spec.families) {
      for (auto& ep : generate_demos(f, a.n_demos, spec.seed)) demos.episodes.push_back(std::move(ep));
    }
    demos.manifest = {{"generator", "actguard-simulate"},
                      {"kind", "demonstrations"},
                      {"families", family_list},
                      {"n_demos", std::to_string(a.n_demos)},
                      {"seed", std::to_string(spec.seed)}};
    write_episodes(demos, std::filesystem::path(a.demos_out));
  }

  if (!a.manifest.empty()) {
    json m;
    m["format"] = "actguard-benchmark-manifest";
    m["version"] = 1;
    m["episodes"] = a.out;
    m["seed"] = spec.seed;
    m["n_per_family"] = spec.n_per_family;
    m["failure_rate"] = spec.failure_rate;
    m["mixture"] = {{"oscillation", spec.mixture[0]}, {"stall", spec.mixture[1]}, {"wrong_target", spec.mixture[2]}};
    m["intensity"] = spec.intensity;
    json fams = json::array();
    for (const auto& f : spec.families) {
      std::map<std::string, int> counts;
      for (const auto& ep : ds.episodes) {
        if (ep.family == std::string(to_string(f.family))) ++counts[ep.source.value_or("")];
      }
      json c = json::object();
      for (const auto& [k, v] : counts) c[k.substr(k.find('/') + 1)] = v;
      fams.push_back({{"family", to_string(f.family)}, {"counts", c}});
    }
    m["families"] = std::move(fams);
    if (!a.demos_out.empty()) {
      m["demos"] = a.demos_out;
      m["n_demos"] = a.n_demos;
    }
    write_text_file(a.manifest, m.dump(2) + "\n");
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bench

int run_bench(const BenchArgs& a, std::ostream& out) {
  BenchConfig cfg;
  cfg.dims = a.dims;
  cfg.steps = a.steps;
  cfg.warmup = a.warmup;
  cfg.seed = a.seed;
  out << bench_to_json(run_step_bench(cfg)) << '\n';
  return kExitOk;
}

int report_error(std::ostream& err, const char* kind, const std::string& message, int code) {
  err << "actguard: error[" << kind << "]: " << message << '\n';
  return code;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"actguard: action-space runtime monitoring for robot policies", "actguard"};
  app.require_subcommand(1);
  app.fallthrough(false);

  std::function<int()> action;

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "Calibrate a conformal safety contract from demonstrations");
  c->add_option("--demos", cal.demos, "Demonstration episodes (.jsonl or .csv)")->required();
  c->add_option("--alpha", cal.alpha, "Miscoverage level")->capture_default_str();
  c->add_option("--out", cal.out, "Contract JSON to write")->required();
  c->add_option("--report", cal.report, "Calibration report JSON (default: standard output)");
  c->add_option("--holdout", cal.holdout, "Episodes for coverage (default: the calibration split)");
  c->add_option("--monitor-config", cal.monitor_config, "Write monitor thresholds calibrated on the demos");
  c->add_option("--seed", cal.seed, "Split seed")->capture_default_str();
  c->add_option("--split-ratio", cal.split_ratio, "Fraction of episodes used for fitting")->capture_default_str();
  c->add_option("--velocity-percentile", cal.velocity_percentile, "Percentile of |delta| for v_max")
      ->capture_default_str();
  c->add_option("--sigma-k", cal.sigma_k, "k for the mean +- k sigma baseline")->capture_default_str();
  c->callback([&] { action = [&] { return run_calibrate(cal, out); }; });

  MonitorArgs mon;
  auto* m = app.add_subcommand("monitor", "Enforce and monitor an action stream (JSONL on standard input)");
  m->add_option("--contract", mon.contract, "Contract JSON")->required();
  m->add_option("--cusum-h", mon.cusum_h, "CUSUM alarm threshold")->capture_default_str();
  m->add_option("--alpha", mon.alpha, "CUSUM reference level (default: the contract's alpha)");
  m->add_option("--violations", mon.violations, "Violation log JSONL");
  m->add_option("--cusum-log", mon.cusum_log, "Per-step score, p-value and CUSUM statistic JSONL");
  m->add_flag("--fail-closed", mon.fail_closed, "Stop forwarding actions after an alarm");
  m->callback([&] { action = [&] { return run_monitor(mon, in, out, err); }; });

  MetricsArgs met;
  auto* h = app.add_subcommand("metrics", "Compute per-episode health metrics");
  h->add_option("--episodes", met.episodes, "Episodes (.jsonl or .csv)")->required();
  h->add_option("--config", met.config, "Monitor config JSON (default: built-in thresholds)");
  h->add_option("--out", met.out, "Metrics CSV to write")->required();
  h->add_option("--contract", met.contract, "Contract for velocity-violation counts");
  h->callback([&] { action = [&] { return run_metrics(met); }; });

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score metrics as failure predictors");
  e->add_option("--metrics", ev.metrics, "Metrics CSV");
  e->add_option("--out", ev.out, "Report JSON to write")->required();
  e->add_option("--seed", ev.seed, "Bootstrap seed")->required();
  e->add_option("--fisher", ev.fisher, "2x2 table [label:]a,b,c,d (rows: condition; columns: success, failure)");
  e->add_option("--n-boot", ev.n_boot, "Bootstrap resamples")->capture_default_str();
  e->add_option("--level", ev.level, "Confidence level")->capture_default_str();
  e->add_option("--text", ev.text, "Text report (default: standard output)");
  e->callback([&] { action = [&] { return run_evaluate(ev, out); }; });

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate a labelled synthetic benchmark");
  s->add_option("--family", sim.family, "discrete, smooth, chunked or all")->required();
  s->add_option("--n", sim.n, "Episodes per family (default from config: 200)");
  s->add_option("--failure-rate", sim.failure_rate, "Failure fraction per family (default from config: 0.4)");
  s->add_option("--intensity", sim.intensity, "Failure intensity (default 1)");
  s->add_option("--seed", sim.seed, "Benchmark seed")->required();
  s->add_option("--out", sim.out, "Episode file (.jsonl or .csv)")->required();
  s->add_option("--demos-out", sim.demos_out, "Success-only demonstrations for calibration");
  s->add_option("--n-demos", sim.n_demos, "Demonstrations per family")->capture_default_str();
  s->add_option("--manifest", sim.manifest, "Benchmark manifest JSON");
  s->add_option("--config", sim.config, "Synthetic settings JSON (default: built-in)");
  s->callback([&] { action = [&] { return run_simulate(sim); }; });

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Time the per-step enforce + monitor path");
  b->add_option("--dims", bench.dims, "Action dimensions")->capture_default_str();
  b->add_option("--steps", bench.steps, "Timed steps")->capture_default_str();
  b->add_option("--warmup", bench.warmup, "Untimed warmup steps")->capture_default_str();
  b->add_option("--seed", bench.seed, "Data seed")->capture_default_str();
  b->callback([&] { action = [&] { return run_bench(bench, out); }; });

  std::vector<std::string> argv_store{"actguard"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& arg : argv_store) argv.push_back(arg.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    return report_error(err, "usage", ex.what(), kExitUsage);
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const ConfigError& ex) {
    return report_error(err, "usage", ex.what(), kExitUsage);
  } catch (const DataError& ex) {
    return report_error(err, "data", ex.what(), kExitData);
  } catch (const std::exception& ex) {
    return report_error(err, "internal", ex.what(), kExitInternal);
  }
}

}  // namespace actguard
