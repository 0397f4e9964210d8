#include "dab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <vector>

#include "dab/csv.hpp"
#include "dab/error.hpp"

namespace fs = std::filesystem;

namespace dab::cli {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults{
      {"alpha0", "0.05"},
      {"bench_delta_d", "0.05"},
      {"bench_detector", "B-GLR"},
      {"bench_placements", "4"},
      {"bench_pre_mean", "0.5"},
      {"bench_pre_window", "200"},
      {"bench_thresholds", "practical"},
      {"bench_trials", "200"},
      {"change_scope", "all"},
      {"combos", "DAB:B-GLR+klUCB"},
      {"cond_cd", "3"},
      {"cond_cm", "2"},
      {"detector_sigma", "0.5"},
      {"feed_policy_samples", "true"},
      {"gamma", "0.5"},
      {"grid_points", "100"},
      {"init_hi", "0.9"},
      {"init_lo", "0.1"},
      {"klucb_c", "3"},
      {"magnitude_hi", "0.4"},
      {"magnitude_lo", "0.1"},
      {"policy_sigma", "1"},
      {"reward_model", "bernoulli"},
      {"reward_sigma", "0.5"},
      {"seed", "1"},
      {"split_stride", "5"},
      {"test_stride", "10"},
      {"threshold", "practical"},
      {"trial", "0"},
      {"xi", "0.5"},
  };
  return defaults;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k{"arms", "horizon", "trials", "instance", "bench_gaps", "bench_horizons",
                            "bench_delta_f", "workers"};
    for (const auto& [key, value] : default_values()) k.insert(key);
    return k;
  }();
  return keys;
}

KeyValueConfig resolve(const KeyValueConfig& user) {
  user.reject_unknown(known_keys());
  KeyValueConfig resolved;
  for (const auto& [key, value] : default_values()) resolved.set(key, value);
  for (const auto& [key, value] : user.values()) resolved.set(key, value);
  resolved.erase("workers");
  return resolved;
}

namespace {

std::size_t positive_size(const KeyValueConfig& c, const std::string& key, std::int64_t fallback, std::int64_t min) {
  const auto v = c.get_int(key, fallback);
  if (v < min) throw ConfigError("config: '" + key + "' must be >= " + std::to_string(min));
  return static_cast<std::size_t>(v);
}

ArmModel arm_model(const KeyValueConfig& c) {
  const auto model = c.get_string("reward_model", "bernoulli");
  if (model == "bernoulli") return ArmModel::bernoulli();
  if (model == "gaussian") {
    const double sigma = c.get_double("reward_sigma", 0.5);
    if (!(sigma > 0.0)) throw ConfigError("config: reward_sigma must be > 0");
    return ArmModel::gaussian(sigma);
  }
  throw ConfigError("config: reward_model must be bernoulli or gaussian");
}

DetectorConfig detector_base(const KeyValueConfig& c) {
  DetectorConfig d;
  d.sigma = c.get_double("detector_sigma", 0.5);
  d.threshold = parse_threshold_mode(c.get_string("threshold", "practical"));
  d.test_stride = c.get_int("test_stride", 10);
  d.split_stride = c.get_int("split_stride", 5);
  return d;
}

std::shared_ptr<const PiecewiseInstance> fixed_instance(const KeyValueConfig& c) {
  const auto path = c.get_string("instance", "");
  if (path.empty()) return nullptr;
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open instance '" + path + "'");
  return std::make_shared<const PiecewiseInstance>(read_instance(in));
}

std::vector<double> xi_values(const KeyValueConfig& c) {
  auto xis = c.get_double_list("xi");
  std::sort(xis.begin(), xis.end());
  xis.erase(std::unique(xis.begin(), xis.end()), xis.end());
  return xis;
}

}  // namespace

ExperimentPlan build_plan(const KeyValueConfig& c, bool sweep) {
  const auto instance = fixed_instance(c);
  if (!instance) c.require({"arms", "horizon"});
  c.require({"trials"});

  GeometricEnvConfig env;
  env.num_arms = instance ? instance->num_arms() : positive_size(c, "arms", 0, 2);
  env.horizon = instance ? instance->horizon() : static_cast<Step>(positive_size(c, "horizon", 0, 1));
  if (instance && ((c.has("arms") && positive_size(c, "arms", 0, 2) != env.num_arms) ||
                   (c.has("horizon") && c.get_int("horizon", 0) != env.horizon)))
    throw ConfigError("config: arms/horizon disagree with the instance file");
  env.magnitude_lo = c.get_double("magnitude_lo", 0.1);
  env.magnitude_hi = c.get_double("magnitude_hi", 0.4);
  env.initial_lo = c.get_double("init_lo", 0.1);
  env.initial_hi = c.get_double("init_hi", 0.9);
  env.arm_model = instance ? instance->arm_model() : arm_model(c);
  const auto scope = c.get_string("change_scope", "all");
  if (scope != "one" && scope != "all") throw ConfigError("config: change_scope must be one or all");
  env.change_scope = scope == "all" ? ChangeScope::AllArms : ChangeScope::OneArm;

  DabConfig dab;
  dab.num_arms = env.num_arms;
  dab.horizon = env.horizon;
  dab.alpha0 = c.get_double("alpha0", 0.05);
  dab.gamma = c.get_double("gamma", 0.5);
  dab.policy.sigma = c.get_double("policy_sigma", 1.0);
  dab.policy.kl_c = c.get_double("klucb_c", 3.0);
  dab.policy.horizon = env.horizon;
  dab.feed_policy_samples = c.get_bool("feed_policy_samples", true);

  const auto base_detector = detector_base(c);
  const auto combo_names = c.get_list("combos");
  if (combo_names.empty()) throw ConfigError("config: combos must list at least one combo");
  auto xis = xi_values(c);
  if (xis.empty()) throw ConfigError("config: xi must list at least one value");
  if (!sweep && xis.size() > 1) throw ConfigError("config: run takes a single xi; use sweep for a list");
  if (instance) xis.resize(1);

  ExperimentPlan plan;
  plan.workers = positive_size(c, "workers", 1, 1);
  const auto trials = static_cast<std::int64_t>(positive_size(c, "trials", 0, 1));
  const auto seed = c.get_u64("seed", 1);
  const auto grid_points = positive_size(c, "grid_points", 100, 1);
  for (const auto& name : combo_names) {
    const auto combo = parse_combo(name, base_detector);
    combo_config(combo, dab).validate();
    for (double xi : xis) {
      ExperimentSpec spec;
      spec.combo = combo;
      spec.env = env;
      spec.env.xi = xi;
      if (!instance) spec.env.validate();
      spec.instance = instance;
      spec.dab = dab;
      spec.trials = trials;
      spec.base_seed = seed;
      spec.grid_points = grid_points;
      plan.entries.push_back(std::move(spec));
    }
  }
  return plan;
}

namespace {

struct Context {
  KeyValueConfig resolved;
  std::size_t workers = 1;
  fs::path out_dir;
  std::ostream& out;
  std::ostream& err;
};

void write_snapshot(const Context& ctx) {
  write_file_atomic(ctx.out_dir / "resolved_config.txt", [&](std::ostream& o) { ctx.resolved.write(o); });
}

void warn_clamped(const ExperimentPlan& plan, std::ostream& err) {
  for (const auto& e : plan.entries) {
    if (e.combo.baseline()) continue;
    DabConfig cfg = combo_config(e.combo, e.dab);
    if (exploration_frequency(1, cfg).clamped) {
      err << "warning: alpha_1 >= 1 for " << e.combo.label << "; forced exploration reduced to round-robin\n";
      return;
    }
  }
}

int report_failures(std::span<const AggregateStats> stats, std::ostream& err) {
  std::int64_t failed = 0;
  for (const auto& s : stats) failed += s.failed_trials;
  if (failed == 0) return kExitOk;
  err << "error: " << failed << " trial(s) failed for lack of memory; aggregates cover the remaining trials\n";
  return kExitRuntime;
}

int cmd_run(Context& ctx, bool sweep) {
  KeyValueConfig c = ctx.resolved;
  c.set("workers", std::to_string(ctx.workers));
  auto plan = build_plan(c, sweep);
  warn_clamped(plan, ctx.err);
  const auto stats = run_plan(plan);

  write_file_atomic(ctx.out_dir / "aggregate.csv", [&](std::ostream& o) { write_aggregate_csv(o, stats); });
  if (!sweep) {
    write_file_atomic(ctx.out_dir / "trajectory.csv", [&](std::ostream& o) { write_trajectory_csv(o, stats); });
  } else {
    std::vector<std::string> files;
    for (const auto& s : stats) {
      const auto name = "trajectory_xi" + (s.xi ? format_double(*s.xi) : std::string("fixed")) + ".csv";
      if (std::find(files.begin(), files.end(), name) != files.end()) continue;
      files.push_back(name);
      std::vector<AggregateStats> subset;
      for (const auto& t : stats)
        if (t.xi == s.xi) subset.push_back(t);
      write_file_atomic(ctx.out_dir / name, [&](std::ostream& o) { write_trajectory_csv(o, subset); });
    }
    write_file_atomic(ctx.out_dir / "delay_summary.csv", [&](std::ostream& o) { write_delay_summary_csv(o, stats); });
  }
  write_snapshot(ctx);
  for (const auto& s : stats)
    ctx.out << s.combo << " xi=" << (s.xi ? format_double(*s.xi) : "fixed") << " mean_regret=" << s.mean_regret
            << " std=" << s.std_regret << " detections=" << s.detections_mean << '\n';
  return report_failures(stats, ctx.err);
}

int cmd_detect_bench(Context& ctx) {
  const auto& c = ctx.resolved;
  c.require({"bench_gaps", "bench_horizons"});
  const auto gaps = c.get_double_list("bench_gaps");
  const auto horizons = c.get_int_list("bench_horizons");
  const auto delta_ds = c.get_double_list("bench_delta_d");
  const auto thresholds = c.get_list("bench_thresholds");
  const auto detectors = c.get_list("bench_detector");
  if (gaps.empty() || horizons.empty() || delta_ds.empty() || thresholds.empty() || detectors.empty())
    throw ConfigError("config: bench lists must be non-empty");
  const auto pre_window = c.get_int("bench_pre_window", 200);
  const auto trials = c.get_int("bench_trials", 200);
  if (trials < 1) throw ConfigError("config: bench_trials must be >= 1");
  const double gamma = c.get_double("gamma", 0.5);
  const auto seed = c.get_u64("seed", 1);

  LatencyOptions options;
  options.stream_model = arm_model(c);
  options.pre_mean = c.get_double("bench_pre_mean", 0.5);
  options.placements = c.get_int("bench_placements", 4);
  if (options.placements < 1) throw ConfigError("config: bench_placements must be >= 1");

  for (double d : delta_ds)
    if (!(d > 0.0 && d <= 1.0)) throw ConfigError("config: bench_delta_d values must lie in (0,1]");
  for (auto M : horizons)
    if (pre_window < 0 || pre_window >= M) throw ConfigError("config: need 0 <= bench_pre_window < every horizon");
  for (double g : gaps) {
    const double post = options.pre_mean + g;
    if (options.stream_model.family == RewardFamily::Bernoulli && (post < 0.0 || post > 1.0))
      throw ConfigError("config: bench_pre_mean + gap leaves [0,1]");
  }

  std::ostringstream rows;
  rows << "detector,threshold,gap,M,pre_window,delta_f,delta_d,trials,latency,false_alarm_rate,mean_delay,"
          "resolution_warning\n";
  for (const auto& label : detectors) {
    for (const auto& mode_name : thresholds) {
      DetectorConfig cfg = parse_detector_label(label, detector_base(c));
      cfg.threshold = parse_threshold_mode(mode_name);
      for (double gap : gaps) {
        for (auto M : horizons) {
          for (double delta_d : delta_ds) {
            cfg.delta_f = c.has("bench_delta_f") ? c.get_double("bench_delta_f", 0.01)
                                                 : std::pow(static_cast<double>(M), -gamma);
            cfg.validate();
            options.seed = derive_seed(seed, {std::bit_cast<std::uint64_t>(gap), static_cast<std::uint64_t>(M),
                                              std::bit_cast<std::uint64_t>(delta_d)});
            const auto p = measure_latency_profile(cfg, gap, M, pre_window, delta_d, trials, options);
            if (p.resolution_warning)
              ctx.err << "warning: " << trials << " trials cannot resolve delta_D=" << delta_d << '\n';
            rows << detector_label(cfg) << ',' << to_string(cfg.threshold) << ',' << format_double(gap) << ',' << M
                 << ',' << pre_window << ',' << format_double(cfg.delta_f) << ',' << format_double(delta_d) << ','
                 << trials << ',' << (p.latency ? std::to_string(*p.latency) : std::string("inf")) << ','
                 << format_double(p.false_alarm_rate) << ',' << format_double(p.mean_delay) << ','
                 << int(p.resolution_warning) << '\n';
          }
        }
      }
    }
  }
  write_file_atomic(ctx.out_dir / "detect_bench.csv", [&](std::ostream& o) { o << rows.str(); });
  write_snapshot(ctx);
  return kExitOk;
}

// The entry replayed by check-condition and replay: first combo, first xi.
ExperimentSpec first_entry(const KeyValueConfig& c) {
  KeyValueConfig single = c;
  if (!c.has("trials")) single.set("trials", "1");
  const auto xis = xi_values(c);
  if (!xis.empty()) single.set("xi", format_double(xis.front()));
  return build_plan(single, false).entries.front();
}

int cmd_check_condition(Context& ctx) {
  const auto& c = ctx.resolved;
  const auto spec = first_entry(c);
  const auto trial = c.get_int("trial", 0);
  if (trial < 0) throw ConfigError("config: trial must be >= 0");
  const auto instance = trial_instance(spec, trial);
  DabConfig cfg = spec.dab;
  cfg.detector = spec.combo.detector;

  LatencyModel model;
  model.c_d = c.get_double("cond_cd", 3.0);
  model.c_m = c.get_double("cond_cm", 2.0);
  model.sigma = c.get_double("detector_sigma", 0.5);
  model.delta_f = model.delta_d = cfg.delta();
  const auto report = check_separation_condition(
      instance, cfg, [&](double gap, Step T) { return model.pre_window(gap, T); },
      [&](double gap, Step T) { return model.latency(gap, T); });

  write_file_atomic(ctx.out_dir / "condition.csv", [&](std::ostream& o) {
    o << "k,nu_prev,nu,interval_length,period,pre_window,prev_latency,satisfied\n";
    for (const auto& chk : report.checks) {
      const Step period = exploration_frequency(chk.k, cfg).period;
      o << chk.k << ',' << instance.boundary(chk.k - 1) << ',' << instance.boundary(chk.k) << ','
        << chk.interval_length << ',' << (period == kNoExploration ? std::string("inf") : std::to_string(period))
        << ',' << format_double(chk.pre_window) << ',' << format_double(chk.prev_latency) << ','
        << int(chk.satisfied) << '\n';
    }
  });
  write_snapshot(ctx);
  ctx.out << "change-points: " << report.checks.size() << ", fraction satisfied: " << report.fraction_satisfied
          << '\n';
  return kExitOk;
}

int cmd_replay(Context& ctx) {
  const auto& c = ctx.resolved;
  const auto spec = first_entry(c);
  const auto trial = c.get_int("trial", 0);
  if (trial < 0) throw ConfigError("config: trial must be >= 0");
  const auto instance = trial_instance(spec, trial);

  struct TraceRow {
    Step t;
    Arm arm;
    DetectorEvaluation eval;
  };
  std::vector<TraceRow> trace;
  DabConfig base = spec.dab;
  const DabConfig cfg = combo_config(spec.combo, base);
  Rng rng(reward_seed(spec.base_seed, spec.env.xi, trial));
  const TrialRecord record =
      spec.combo.baseline()
          ? run_policy_episode(cfg.policy, instance, rng)
          : run_episode(cfg, instance, rng, [&](Step t, Arm a, const DetectorEvaluation& e) { trace.push_back({t, a, e}); });

  std::vector<Step> restarts;
  for (const auto& d : record.detections) restarts.push_back(d.time);
  const auto metrics = classify_detections(restarts, instance.change_points());

  write_file_atomic(ctx.out_dir / "instance.txt", [&](std::ostream& o) { write_instance(o, instance); });
  write_file_atomic(ctx.out_dir / "trial.csv", [&](std::ostream& o) { write_trial_csv(o, record); });
  write_file_atomic(ctx.out_dir / "detections.csv", [&](std::ostream& o) {
    o << "time,interval,true_detection,delay,missed_until_next\n";
    const auto& cps = instance.change_points();
    Step prev = 0;
    for (const auto& d : record.detections) {
      const auto lo = std::upper_bound(cps.begin(), cps.end(), prev);
      const auto hi = std::upper_bound(cps.begin(), cps.end(), d.time);
      const auto count = hi - lo;
      o << d.time << ',' << d.interval << ',' << int(count > 0) << ','
        << (count > 0 ? std::to_string(d.time - *(hi - 1)) : std::string()) << ','
        << (count > 0 ? std::to_string(count) : std::string()) << '\n';
      prev = d.time;
    }
  });
  write_file_atomic(ctx.out_dir / "detector_trace.csv", [&](std::ostream& o) {
    o << "t,arm,n,statistic,threshold,alarm\n";
    for (const auto& r : trace)
      o << r.t << ',' << r.arm + 1 << ',' << r.eval.n << ',' << format_double(r.eval.statistic) << ','
        << format_double(r.eval.threshold) << ',' << int(r.eval.alarm) << '\n';
  });
  write_snapshot(ctx);
  ctx.out << spec.combo.label << " trial " << trial << ": regret=" << record.final_regret()
          << " change-points=" << instance.num_changes() << " detections=" << metrics.detections
          << " true=" << metrics.true_detections << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Detection-augmented bandit simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "dab_out";
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> workers;
  std::vector<std::string> overrides;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"run", "Run one experiment at a single xi"},
      {"sweep", "Run every combo across a list of xi values"},
      {"detect-bench", "Detector-only latency and false-alarm Monte Carlo"},
      {"check-condition", "Check change-point separation on one instance"},
      {"replay", "Re-run one trial and dump its full trajectory"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "base seed");
    sub->add_option("--workers", workers, "worker threads");
    sub->add_option("--set", overrides, "key=value override (repeatable)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    KeyValueConfig user = config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
    for (const auto& o : overrides) user.set(o);
    if (seed) user.set("seed", std::to_string(*seed));
    if (workers) user.set("workers", std::to_string(*workers));
    const auto w = user.get_int("workers", 1);
    if (w < 1) throw ConfigError("config: workers must be >= 1");

    Context ctx{resolve(user), static_cast<std::size_t>(w), out_dir, out, err};
    fs::create_directories(ctx.out_dir);
    if (command == "run") return cmd_run(ctx, false);
    if (command == "sweep") return cmd_run(ctx, true);
    if (command == "detect-bench") return cmd_detect_bench(ctx);
    if (command == "check-condition") return cmd_check_condition(ctx);
    return cmd_replay(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace dab::cli
