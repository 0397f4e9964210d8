// Acceptance suite: one PASS/FAIL line per criterion. Exit code 1 if any fails.
//
//   acceptance [--only N[,N...]] [--workers N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dab/cli.hpp"
#include "dab/harness.hpp"
#include "oracles.hpp"

using namespace dab;
namespace fs = std::filesystem;

namespace {

std::size_t g_workers = 1;

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Random sequences of length 2..30 with one possible mean shift.
std::vector<std::vector<double>> corpus(bool bernoulli) {
  Rng rng(derive_seed(2024, {bernoulli ? 1u : 2u}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out;
  for (int i = 0; i < 1000; ++i) {
    const auto n = 2 + static_cast<std::size_t>(uniform01(rng) * 29);
    const auto s = static_cast<std::size_t>(uniform01(rng) * double(n));
    const double p = uniform01(rng), q = uniform01(rng);
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double mean = j < s ? p : q;
      x[j] = bernoulli ? double(uniform01(rng) < mean) : mean + 0.5 * normal(rng);
    }
    out.push_back(std::move(x));
  }
  return out;
}

Outcome glr_oracle() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (bool bern : {true, false}) {
    for (const auto& x : corpus(bern)) {
      const double fast =
          glr_statistic(oracle::prefix_sums(x), bern ? Likelihood::BernoulliKl : Likelihood::Gaussian, 0.5);
      worst = std::max(worst, std::abs(fast - oracle::glr(x, bern, 0.5)));
    }
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-9 && secs < 60.0, fmt("max |closed form - brute force| = %.3g over 2000 sequences, %.1fs", worst, secs)};
}

Outcome gsr_sandwich() {
  const auto start = Clock::now();
  int violations = 0;
  for (bool bern : {true, false}) {
    for (const auto& x : corpus(bern)) {
      const auto p = oracle::prefix_sums(x);
      const auto lik = bern ? Likelihood::BernoulliKl : Likelihood::Gaussian;
      const double g = glr_statistic(p, lik, 0.5, 1);
      const double w = gsr_log_statistic(p, lik, 0.5);
      const double slack = 1e-12 * std::max(1.0, std::abs(g));
      if (w > g + slack || w < g - std::log(double(x.size())) - slack) ++violations;
    }
  }
  const double secs = seconds_since(start);
  return {violations == 0 && secs < 60.0, fmt("%d violations over 2000 sequences, %.1fs", violations, secs)};
}

DetectorConfig bench_detector(ThresholdMode mode, double delta_f) {
  DetectorConfig d;
  d.kind = DetectorKind::Glr;
  d.likelihood = Likelihood::BernoulliKl;
  d.threshold = mode;
  d.delta_f = delta_f;
  d.test_stride = 10;
  d.split_stride = 5;
  return d;
}

// Runs f(i) for i in [0, n) on g_workers threads.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& f) {
  std::atomic<std::int64_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < g_workers; ++w)
    pool.emplace_back([&] {
      for (std::int64_t i; (i = next++) < n;) f(i);
    });
}

Outcome false_alarms() {
  const auto start = Clock::now();
  const auto cfg = bench_detector(ThresholdMode::Theoretical, 0.01);
  const std::int64_t streams = 2000, length = 5000;
  std::vector<char> alarm(streams, 0);
  parallel_for(streams, [&](std::int64_t i) {
    Rng rng(derive_seed(3, {std::uint64_t(i)}));
    DetectorState s;
    for (std::int64_t t = 0; t < length; ++t) {
      if (push_and_test(s, cfg, double(uniform01(rng) < 0.5))) {
        alarm[std::size_t(i)] = 1;
        break;
      }
    }
  });
  const double rate = double(std::count(alarm.begin(), alarm.end(), 1)) / double(streams);
  const double secs = seconds_since(start);
  return {rate <= 0.0167 && secs < 120.0, fmt("alarm fraction %.4f (limit 0.0167), %.1fs", rate, secs)};
}

struct DelayRun {
  double within = 0.0;  // fraction alarming in [nu, nu + 300)
  double mean_delay = 0.0;
};

DelayRun delay_run(double post, std::uint64_t tag) {
  const std::int64_t T = 5000, nu = 1000, seeds = 1000;
  const auto cfg = bench_detector(ThresholdMode::Practical, 1.0 / std::sqrt(double(T)));
  std::vector<std::int64_t> tau(seeds, -1);
  parallel_for(seeds, [&](std::int64_t i) {
    Rng rng(derive_seed(4, {tag, std::uint64_t(i)}));
    DetectorState s;
    for (std::int64_t t = 1; t <= T; ++t) {
      if (push_and_test(s, cfg, double(uniform01(rng) < (t < nu ? 0.5 : post)))) {
        tau[std::size_t(i)] = t;
        break;
      }
    }
  });
  DelayRun r;
  double delay_sum = 0.0;
  int delayed = 0;
  for (auto t : tau) {
    if (t >= nu && t < nu + 300) r.within += 1.0;
    if (t >= nu) {
      delay_sum += double(t - nu);
      ++delayed;
    }
  }
  r.within /= double(seeds);
  r.mean_delay = delayed ? delay_sum / delayed : INFINITY;
  return r;
}

Outcome latency() {
  const auto start = Clock::now();
  const auto main = delay_run(0.8, 1);
  const auto small = delay_run(0.7, 2);
  const auto large = delay_run(0.9, 3);
  const double secs = seconds_since(start);
  const bool ok = main.within >= 0.95 && large.mean_delay < small.mean_delay && secs < 120.0;
  return {ok, fmt("0.5->0.8 alarmed within 300: %.3f (need 0.95); mean delay gap 0.4: %.1f < gap 0.2: %.1f, %.1fs",
                  main.within, large.mean_delay, small.mean_delay, secs)};
}

KeyValueConfig sweep_config(std::map<std::string, std::string> values) {
  KeyValueConfig user;
  for (const auto& [k, v] : values) user.set(k, v);
  return cli::resolve(user);
}

std::vector<AggregateStats> table_sweep;
double table_secs = 0.0;

const AggregateStats& row(const std::string& combo, double xi) {
  for (const auto& s : table_sweep)
    if (s.combo == combo && s.xi && std::abs(*s.xi - xi) < 1e-12) return s;
  throw std::runtime_error("missing sweep row " + combo);
}

void run_table_sweep() {
  if (!table_sweep.empty()) return;
  const auto start = Clock::now();
  auto plan = cli::build_plan(sweep_config({{"arms", "5"},
                                            {"horizon", "20000"},
                                            {"trials", "200"},
                                            {"xi", "0.3,0.4,0.6,0.8"},
                                            {"combos", "DAB:B-GLR+klUCB,klUCB,UCB"},
                                            {"alpha0", "0.05"},
                                            {"gamma", "0.5"},
                                            {"test_stride", "10"},
                                            {"split_stride", "5"}}),
                              true);
  plan.workers = g_workers;
  table_sweep = run_plan(plan);
  table_secs = seconds_since(start);
}

Outcome regret_trends() {
  run_table_sweep();
  const std::string dab = "DAB:B-GLR+klUCB";
  const double d4 = row(dab, 0.4).mean_regret, d6 = row(dab, 0.6).mean_regret, d8 = row(dab, 0.8).mean_regret;
  const bool a = d4 > d6 && d6 > d8;
  bool b = true, c = true;
  for (double xi : {0.6, 0.8}) b = b && row(dab, xi).mean_regret < row("klUCB", xi).mean_regret;
  std::ostringstream kl_ucb;
  for (double xi : {0.3, 0.4, 0.6, 0.8}) {
    const double k = row("klUCB", xi).mean_regret, u = row("UCB", xi).mean_regret;
    c = c && k > u;
    kl_ucb << fmt(" xi=%.1f %.0f>%.0f", xi, k, u);
  }
  const bool ok = a && b && c && table_secs < 600.0;
  return {ok, fmt("(a) DAB %.0f > %.0f > %.0f: %s; (b) DAB < klUCB at 0.6 (%.0f<%.0f), 0.8 (%.0f<%.0f): %s; "
                  "(c) klUCB > UCB:%s: %s; %.0fs",
                  d4, d6, d8, a ? "yes" : "no", row(dab, 0.6).mean_regret, row("klUCB", 0.6).mean_regret,
                  row(dab, 0.8).mean_regret, row("klUCB", 0.8).mean_regret, b ? "yes" : "no",
                  kl_ucb.str().c_str(), c ? "yes" : "no", table_secs)};
}

Outcome detection_trends() {
  run_table_sweep();
  const auto& hi = row("DAB:B-GLR+klUCB", 0.8);
  const auto& lo = row("DAB:B-GLR+klUCB", 0.3);
  const double f_hi = hi.true_det_mean / hi.cp_mean, f_lo = lo.true_det_mean / lo.cp_mean;
  const bool ok = f_hi >= 0.6 && hi.missed_until_next_mean <= 3.0 && f_lo < 0.15;
  return {ok, fmt("xi=0.8 TD/CP %.3f (need >= 0.6), missed %.2f (need <= 3); xi=0.3 TD/CP %.3f (need < 0.15)", f_hi,
                  hi.missed_until_next_mean, f_lo)};
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[e.path().filename().string()] = ss.str();
  }
  return files;
}

Outcome reduction_and_determinism() {
  const auto start = Clock::now();
  GeometricEnvConfig env;
  env.num_arms = 5;
  env.horizon = 20000;
  env.xi = 0.5;
  int mismatches = 0;
  for (auto kind : {PolicyKind::Ucb, PolicyKind::KlUcb, PolicyKind::Moss}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng env_rng(derive_seed(7, {seed}));
      const auto inst = generate_geometric_instance(env, env_rng);
      DabConfig cfg;
      cfg.num_arms = 5;
      cfg.horizon = env.horizon;
      cfg.alpha0 = 0.0;
      cfg.policy = PolicyParams{kind, 1.0, 3.0, env.horizon};
      DabAgent agent(cfg, make_policy(cfg.policy, 5), [] { return std::make_unique<NeverAlarmDetector>(); });
      Rng a(derive_seed(8, {seed})), b(derive_seed(8, {seed}));
      const auto composed = run_episode(agent, inst, a);
      const auto bare = run_policy_episode(cfg.policy, inst, b);
      mismatches += composed.arms != bare.arms;
    }
  }

  const auto root = fs::temp_directory_path() / "dab_acceptance_workers";
  fs::remove_all(root);
  std::map<std::string, std::string> outputs[2];
  int codes = 0;
  const char* workers[2] = {"1", "8"};
  for (int i = 0; i < 2; ++i) {
    const auto out = (root / workers[i]).string();
    const char* argv[] = {"dabsim", "sweep", "--out", out.c_str(), "--workers", workers[i], "--set", "arms=5",
                          "--set", "horizon=10000", "--set", "trials=24", "--set", "xi=0.4,0.6,0.8",
                          "--set", "combos=DAB:B-GLR+klUCB,DAB:G-GSR+UCB,klUCB"};
    std::ostringstream sink;
    codes += cli::run_cli(int(std::size(argv)), argv, sink, sink);
    outputs[i] = dir_contents(out);
  }
  fs::remove_all(root);
  const bool identical = codes == 0 && outputs[0] == outputs[1] && outputs[0].size() >= 5;
  const double secs = seconds_since(start);
  return {mismatches == 0 && identical && secs < 120.0,
          fmt("%d/15 reduced runs differ from the bare policy; sweep outputs (%zu files) at workers 1 vs 8 %s, %.1fs",
              mismatches, outputs[0].size(), identical ? "identical" : "DIFFER", secs)};
}

Outcome exploration_ablation() {
  const auto start = Clock::now();
  AggregateStats on, off;
  for (const char* alpha0 : {"0.05", "0"}) {
    auto plan = cli::build_plan(sweep_config({{"arms", "5"},
                                              {"horizon", "200000"},
                                              {"trials", "20"},
                                              {"xi", "0.7"},
                                              {"combos", "DAB:B-GLR+klUCB"},
                                              {"alpha0", alpha0}}),
                                false);
    plan.workers = g_workers;
    (std::string(alpha0) == "0" ? off : on) = run_plan(plan).front();
  }
  const double secs = seconds_since(start);
  const double det_ratio = on.detections_mean / off.detections_mean;
  const bool ok = on.mean_regret <= 1.10 * off.mean_regret && std::abs(det_ratio - 1.0) <= 0.10 && secs < 1200.0;
  return {ok, fmt("regret alpha0=0.05 %.0f vs alpha0=0 %.0f (limit x1.10); detections %.2f vs %.2f (ratio %.3f), %.0fs",
                  on.mean_regret, off.mean_regret, on.detections_mean, off.detections_mean, det_ratio, secs)};
}

Outcome counting_invariant() {
  const auto start = Clock::now();
  int replayed = 0, violations = 0;
  for (const char* combo : {"DAB:B-GLR+klUCB", "DAB:G-GSR+UCB", "DAB:B-GLR+MOSS"}) {
    for (double xi : {0.3, 0.6, 0.8}) {
      for (double alpha0 : {0.05, 0.5, 3.0}) {
        ExperimentSpec spec;
        spec.combo = parse_combo(combo);
        spec.env.num_arms = 4;
        spec.env.horizon = 8000;
        spec.env.xi = xi;
        spec.dab.num_arms = 4;
        spec.dab.horizon = 8000;
        spec.dab.alpha0 = alpha0;
        spec.dab.policy.horizon = 8000;
        spec.base_seed = 99;
        for (std::int64_t trial = 0; trial < 4; ++trial) {
          std::stringstream stored;
          write_trial_csv(stored, run_trial(spec, trial));
          const auto record = read_trial_csv(stored);
          violations += find_forced_exploration_violation(record, combo_config(spec.combo, spec.dab)).has_value();
          ++replayed;
        }
      }
    }
  }
  return {violations == 0,
          fmt("%d violations over %d replayed trajectories, %.1fs", violations, replayed, seconds_since(start))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::vector<int> only;
  g_workers = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--workers", g_workers, "worker threads");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"GLR closed form matches likelihood maximization", glr_oracle},
      {"GSR sandwich", gsr_sandwich},
      {"false-alarm control", false_alarms},
      {"detection latency", latency},
      {"regret trends across xi", regret_trends},
      {"detection trends", detection_trends},
      {"reduction and worker determinism", reduction_and_determinism},
      {"forced-exploration ablation", exploration_ablation},
      {"forced-pull counting invariant", counting_invariant},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failed ? 1 : 0;
}
