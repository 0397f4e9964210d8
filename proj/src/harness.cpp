#include "dab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cctype>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <new>
#include <ostream>
#include <thread>

#include "dab/csv.hpp"
#include "dab/error.hpp"

namespace dab {

std::string Combo::detector_name() const { return detector ? detector_label(*detector) : "none"; }

Combo parse_combo(const std::string& text, const DetectorConfig& base) {
  Combo c;
  c.label = text;
  std::string prefix = text.substr(0, std::min<std::size_t>(4, text.size()));
  std::transform(prefix.begin(), prefix.end(), prefix.begin(), [](unsigned char ch) { return std::toupper(ch); });
  if (prefix != "DAB:") {
    c.policy = parse_policy_kind(text);
    c.label = to_string(c.policy);
    return c;
  }
  const auto rest = text.substr(4);
  const auto plus = rest.find('+');
  if (plus == std::string::npos) throw ConfigError("combo '" + text + "': expected DAB:<detector>+<policy>");
  c.detector = parse_detector_label(rest.substr(0, plus), base);
  c.policy = parse_policy_kind(rest.substr(plus + 1));
  c.label = "DAB:" + detector_label(*c.detector) + "+" + to_string(c.policy);
  return c;
}

DabConfig combo_config(const Combo& combo, const DabConfig& base) {
  DabConfig cfg = base;
  cfg.policy.kind = combo.policy;
  cfg.policy.horizon = cfg.horizon;
  if (combo.detector) {
    cfg.detector = combo.detector;
  } else {
    cfg.detector.reset();
    cfg.alpha0 = 0.0;
  }
  return cfg;
}

std::uint64_t env_seed(std::uint64_t base, double xi, std::int64_t trial) {
  return derive_seed(base, {kEnvStream, std::bit_cast<std::uint64_t>(xi), static_cast<std::uint64_t>(trial)});
}

std::uint64_t reward_seed(std::uint64_t base, double xi, std::int64_t trial) {
  return derive_seed(base, {kRewardStream, std::bit_cast<std::uint64_t>(xi), static_cast<std::uint64_t>(trial)});
}

PiecewiseInstance trial_instance(const ExperimentSpec& spec, std::int64_t trial) {
  if (spec.instance) return *spec.instance;
  Rng rng(env_seed(spec.base_seed, spec.env.xi, trial));
  return generate_geometric_instance(spec.env, rng);
}

namespace {
TrialRecord run_trial_on(const ExperimentSpec& spec, const PiecewiseInstance& instance, std::int64_t trial) {
  DabConfig base = spec.dab;
  base.num_arms = instance.num_arms();
  base.horizon = instance.horizon();
  const DabConfig cfg = combo_config(spec.combo, base);
  Rng rng(reward_seed(spec.base_seed, spec.env.xi, trial));
  if (spec.combo.baseline()) return run_policy_episode(cfg.policy, instance, rng);
  return run_episode(cfg, instance, rng);
}
}  // namespace

TrialRecord run_trial(const ExperimentSpec& spec, std::int64_t trial) {
  return run_trial_on(spec, trial_instance(spec, trial), trial);
}

double dynamic_regret(std::span<const Arm> pulls, const PiecewiseInstance& instance) {
  if (static_cast<Step>(pulls.size()) > instance.horizon())
    throw std::invalid_argument("dynamic_regret: more pulls than the horizon");
  double regret = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < pulls.size(); ++i) {
    const Step t = static_cast<Step>(i) + 1;
    while (t >= instance.boundary(k + 1)) ++k;
    regret += instance.best_mean_in_interval(k) -
              instance.means()(static_cast<Eigen::Index>(pulls[i]), static_cast<Eigen::Index>(k));
  }
  return regret;
}

double DetectionMetrics::mean_delay() const {
  if (delays.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (auto d : delays) sum += static_cast<double>(d);
  return sum / static_cast<double>(delays.size());
}

double DetectionMetrics::mean_missed() const {
  if (missed_counts.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (auto m : missed_counts) sum += static_cast<double>(m);
  return sum / static_cast<double>(missed_counts.size());
}

DetectionMetrics classify_detections(std::span<const Step> restarts, std::span<const Step> change_points) {
  DetectionMetrics m;
  Step prev = 0;
  std::size_t next_cp = 0;  // first change-point after prev
  for (const Step t : restarts) {
    ++m.detections;
    std::size_t count = 0;
    Step latest = 0;
    while (next_cp < change_points.size() && change_points[next_cp] <= t) {
      if (change_points[next_cp] > prev) {
        ++count;
        latest = change_points[next_cp];
      }
      ++next_cp;
    }
    if (count > 0) {
      ++m.true_detections;
      m.delays.push_back(t - latest);
      m.missed_counts.push_back(count);
    } else {
      ++m.false_alarms;
    }
    prev = t;
  }
  return m;
}

std::vector<Step> trajectory_grid(Step horizon, std::size_t points) {
  std::vector<Step> grid;
  if (horizon < 1 || points == 0) return grid;
  const double T = static_cast<double>(horizon);
  for (std::size_t j = 1; j <= points; ++j) {
    const Step t = std::clamp<Step>(std::llround(static_cast<double>(j) * T / static_cast<double>(points)), 1, horizon);
    if (grid.empty() || t > grid.back()) grid.push_back(t);
  }
  return grid;
}

Eigen::VectorXd regret_trajectory(std::span<const TrialRecord> records, std::span<const Step> grid) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  if (records.empty()) return mean;
  for (const auto& r : records)
    for (std::size_t j = 0; j < grid.size(); ++j)
      mean(static_cast<Eigen::Index>(j)) += r.cumulative_regret.at(static_cast<std::size_t>(grid[j] - 1));
  return mean / static_cast<double>(records.size());
}

namespace {

struct TrialSummary {
  bool done = false;
  bool failed = false;
  double final_regret = 0.0;
  std::size_t change_points = 0;
  DetectionMetrics metrics;
  Eigen::VectorXd trajectory;
};

TrialSummary summarize_trial(const ExperimentSpec& spec, std::int64_t trial, const std::vector<Step>& grid) {
  TrialSummary s;
  const auto instance = trial_instance(spec, trial);
  const auto record = run_trial_on(spec, instance, trial);
  s.final_regret = record.final_regret();
  s.change_points = instance.num_changes();
  std::vector<Step> restarts;
  restarts.reserve(record.detections.size());
  for (const auto& d : record.detections) restarts.push_back(d.time);
  s.metrics = classify_detections(restarts, instance.change_points());
  s.trajectory.resize(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t j = 0; j < grid.size(); ++j)
    s.trajectory(static_cast<Eigen::Index>(j)) = record.cumulative_regret[static_cast<std::size_t>(grid[j] - 1)];
  s.done = true;
  return s;
}

AggregateStats reduce(const ExperimentSpec& spec, const std::vector<Step>& grid,
                      std::span<const TrialSummary> trials) {
  AggregateStats a;
  a.combo = spec.combo.label;
  a.detector = spec.combo.detector_name();
  a.policy = to_string(spec.combo.policy);
  if (!spec.instance) a.xi = spec.env.xi;
  a.horizon = spec.instance ? spec.instance->horizon() : spec.env.horizon;
  a.grid = grid;
  a.trajectory = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));

  double cp = 0.0, det = 0.0, td = 0.0, fa = 0.0, missed = 0.0;
  for (const auto& t : trials) {
    if (t.failed) {
      ++a.failed_trials;
      continue;
    }
    a.final_regrets.push_back(t.final_regret);
    cp += static_cast<double>(t.change_points);
    det += static_cast<double>(t.metrics.detections);
    td += static_cast<double>(t.metrics.true_detections);
    fa += static_cast<double>(t.metrics.false_alarms);
    for (auto d : t.metrics.delays) a.delay_sum += static_cast<double>(d);
    for (auto m : t.metrics.missed_counts) missed += static_cast<double>(m);
    a.delay_count += static_cast<std::int64_t>(t.metrics.delays.size());
    a.trajectory += t.trajectory;
  }
  a.trials = static_cast<std::int64_t>(a.final_regrets.size());
  const double n = static_cast<double>(a.trials);
  if (a.trials > 0) {
    double sum = 0.0;
    for (double r : a.final_regrets) sum += r;
    a.mean_regret = sum / n;
    double ss = 0.0;
    for (double r : a.final_regrets) ss += (r - a.mean_regret) * (r - a.mean_regret);
    a.std_regret = std::sqrt(ss / n);
    a.cp_mean = cp / n;
    a.detections_mean = det / n;
    a.true_det_mean = td / n;
    a.false_alarm_mean = fa / n;
    a.trajectory /= n;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  a.mean_delay = a.delay_count ? a.delay_sum / static_cast<double>(a.delay_count) : nan;
  a.missed_until_next_mean = a.delay_count ? missed / static_cast<double>(a.delay_count) : nan;
  return a;
}

}  // namespace

std::vector<AggregateStats> run_plan(const ExperimentPlan& plan) {
  struct Task {
    std::size_t entry;
    std::int64_t trial;
  };
  std::vector<Task> tasks;
  std::vector<std::vector<Step>> grids;
  std::vector<std::vector<TrialSummary>> summaries;
  for (std::size_t e = 0; e < plan.entries.size(); ++e) {
    const auto& spec = plan.entries[e];
    if (spec.trials < 1) throw ConfigError("plan: trials must be >= 1");
    if (!spec.instance) spec.env.validate();
    const Step T = spec.instance ? spec.instance->horizon() : spec.env.horizon;
    grids.push_back(trajectory_grid(T, spec.grid_points));
    summaries.emplace_back(static_cast<std::size_t>(spec.trials));
    for (std::int64_t i = 0; i < spec.trials; ++i) tasks.push_back({e, i});
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const auto& task = tasks[i];
      auto& slot = summaries[task.entry][static_cast<std::size_t>(task.trial)];
      try {
        slot = summarize_trial(plan.entries[task.entry], task.trial, grids[task.entry]);
      } catch (const std::bad_alloc&) {
        slot = TrialSummary{};
        slot.failed = true;
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        abort = true;
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(plan.workers, 1, std::max<std::size_t>(tasks.size(), 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  std::vector<AggregateStats> out;
  for (std::size_t e = 0; e < plan.entries.size(); ++e) out.push_back(reduce(plan.entries[e], grids[e], summaries[e]));
  return out;
}

namespace {
std::string xi_text(const AggregateStats& s) { return s.xi ? format_double(*s.xi) : "fixed"; }
}  // namespace

void write_aggregate_csv(std::ostream& out, std::span<const AggregateStats> stats) {
  out << "combo,detector,policy,xi,T,trials,mean_regret,std_regret,cp_mean,detections_mean,true_det_mean,"
         "false_alarm_mean,mean_delay,missed_until_next_mean\n";
  for (const auto& s : stats) {
    out << s.combo << ',' << s.detector << ',' << s.policy << ',' << xi_text(s) << ',' << s.horizon << ','
        << s.trials << ',' << format_double(s.mean_regret) << ',' << format_double(s.std_regret) << ','
        << format_double(s.cp_mean) << ',' << format_double(s.detections_mean) << ','
        << format_double(s.true_det_mean) << ',' << format_double(s.false_alarm_mean) << ','
        << format_double(s.mean_delay) << ',' << format_double(s.missed_until_next_mean) << '\n';
  }
}

void write_trajectory_csv(std::ostream& out, std::span<const AggregateStats> stats) {
  out << "combo,t,mean_cum_regret\n";
  for (const auto& s : stats)
    for (std::size_t j = 0; j < s.grid.size(); ++j)
      out << s.combo << ',' << s.grid[j] << ',' << format_double(s.trajectory(static_cast<Eigen::Index>(j))) << '\n';
}

void write_delay_summary_csv(std::ostream& out, std::span<const AggregateStats> stats) {
  out << "combo,scope,true_detections,mean_delay\n";
  std::vector<std::string> order;
  std::map<std::string, std::vector<const AggregateStats*>> by_combo;
  for (const auto& s : stats) {
    if (!by_combo.count(s.combo)) order.push_back(s.combo);
    by_combo[s.combo].push_back(&s);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& combo : order) {
    double sum = 0.0, mean_sum = 0.0;
    std::int64_t count = 0, with_delay = 0;
    for (const auto* s : by_combo[combo]) {
      out << combo << ',' << xi_text(*s) << ',' << s->delay_count << ',' << format_double(s->mean_delay) << '\n';
      sum += s->delay_sum;
      count += s->delay_count;
      if (s->delay_count) {
        mean_sum += s->mean_delay;
        ++with_delay;
      }
    }
    out << combo << ",pooled," << count << ',' << format_double(count ? sum / static_cast<double>(count) : nan) << '\n';
    out << combo << ",xi_mean," << count << ','
        << format_double(with_delay ? mean_sum / static_cast<double>(with_delay) : nan) << '\n';
  }
}

}  // namespace dab
