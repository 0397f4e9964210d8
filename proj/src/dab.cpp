#include "dab/dab.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "dab/csv.hpp"
#include "dab/error.hpp"

namespace dab {

double DabConfig::delta() const { return std::pow(static_cast<double>(horizon), -gamma); }

std::optional<DetectorConfig> DabConfig::resolved_detector() const {
  if (!detector) return std::nullopt;
  DetectorConfig d = *detector;
  d.delta_f = delta();
  return d;
}

void DabConfig::validate() const {
  if (num_arms < 2) throw ConfigError("dab: arms must be >= 2");
  if (horizon < 1) throw ConfigError("dab: horizon must be >= 1");
  if (!(alpha0 >= 0.0)) throw ConfigError("dab: alpha0 must be >= 0");
  if (!(gamma > 0.0)) throw ConfigError("dab: gamma must be > 0");
  if (detector) {
    if (horizon < 2) throw ConfigError("dab: detection needs horizon >= 2 so that T^-gamma < 1");
    resolved_detector()->validate();
  }
}

ExplorationSchedule exploration_frequency(std::size_t k, const DabConfig& cfg) {
  if (k < 1) throw std::invalid_argument("exploration_frequency: k must be >= 1");
  ExplorationSchedule s;
  const double T = static_cast<double>(cfg.horizon);
  const double A = static_cast<double>(cfg.num_arms);
  s.alpha = cfg.alpha0 * std::sqrt(static_cast<double>(k) * A * std::log(T) / T);
  if (!(s.alpha > 0.0)) {
    s.alpha = 0.0;
    return s;
  }
  if (s.alpha >= 1.0) {
    s.clamped = true;
    s.period = static_cast<Step>(cfg.num_arms);
    return s;
  }
  const double period = std::ceil(A / s.alpha);
  if (period < static_cast<double>(kNoExploration)) s.period = static_cast<Step>(period);
  return s;
}

DabAgent::DabAgent(const DabConfig& cfg)
    : DabAgent(cfg, make_policy(cfg.policy, cfg.num_arms), [d = cfg.resolved_detector()]() -> std::unique_ptr<ChangeDetector> {
        if (d) return make_detector(*d);
        return std::make_unique<NeverAlarmDetector>();
      }) {}

DabAgent::DabAgent(const DabConfig& cfg, std::unique_ptr<BanditPolicy> policy, const DetectorFactory& factory)
    : cfg_(cfg), policy_(std::move(policy)) {
  cfg_.validate();
  if (!policy_ || policy_->num_arms() != cfg_.num_arms) throw ConfigError("dab: policy arm count mismatch");
  for (std::size_t a = 0; a < cfg_.num_arms; ++a) detectors_.push_back(factory());
  schedule_ = exploration_frequency(k_, cfg_);
}

StepResult DabAgent::step(Step t, const RewardSource& reward) {
  if (t != last_t_ + 1) throw std::invalid_argument("DabAgent::step: times must be consecutive");
  last_t_ = t;

  StepResult r{};
  const Step offset = schedule_.period == kNoExploration ? schedule_.period : (t - tau_ - 1) % schedule_.period;
  r.forced = offset < static_cast<Step>(cfg_.num_arms);
  r.arm = r.forced ? static_cast<Arm>(offset) : policy_->select();
  r.reward = reward(r.arm, t);
  if (!r.forced) policy_->update(r.arm, r.reward);

  if (r.forced || cfg_.feed_policy_samples) {
    auto& detector = *detectors_[r.arm];
    const bool alarm = detector.push(r.reward);
    if (trace_) {
      if (auto eval = detector.last_evaluation()) trace_(t, r.arm, *eval);
    }
    if (alarm) {
      restart(t);
      r.restarted = true;
    }
  }
  return r;
}

void DabAgent::restart(Step t) {
  tau_ = t;
  for (auto& d : detectors_) d->reset();
  policy_->reset();
  ++k_;
  schedule_ = exploration_frequency(k_, cfg_);
  detections_.push_back({t, k_});
}

namespace {

void check_dimensions(const DabConfig& cfg, const PiecewiseInstance& instance) {
  if (cfg.num_arms != instance.num_arms() || cfg.horizon != instance.horizon())
    throw ConfigError("episode: config (A=" + std::to_string(cfg.num_arms) + ", T=" + std::to_string(cfg.horizon) +
                      ") does not match instance (A=" + std::to_string(instance.num_arms()) +
                      ", T=" + std::to_string(instance.horizon()) + ")");
}

void reserve(TrialRecord& rec, Step T) {
  const auto n = static_cast<std::size_t>(T);
  rec.arms.reserve(n);
  rec.forced.reserve(n);
  rec.rewards.reserve(n);
  rec.instant_regret.reserve(n);
  rec.cumulative_regret.reserve(n);
}

void record_step(TrialRecord& rec, const PiecewiseInstance& instance, Step t, Arm arm, double reward, bool forced) {
  const std::size_t k = instance.interval_of(t);
  const double regret = instance.best_mean_in_interval(k) -
                        instance.means()(static_cast<Eigen::Index>(arm), static_cast<Eigen::Index>(k));
  rec.arms.push_back(arm);
  rec.forced.push_back(forced ? 1 : 0);
  rec.rewards.push_back(reward);
  rec.instant_regret.push_back(regret);
  rec.cumulative_regret.push_back((rec.cumulative_regret.empty() ? 0.0 : rec.cumulative_regret.back()) + regret);
}

}  // namespace

TrialRecord run_episode(const DabConfig& cfg, const PiecewiseInstance& instance, Rng& rng, const DetectorTrace& trace) {
  check_dimensions(cfg, instance);
  DabAgent agent(cfg);
  if (trace) agent.set_trace(trace);
  return run_episode(agent, instance, rng);
}

TrialRecord run_episode(DabAgent& agent, const PiecewiseInstance& instance, Rng& rng) {
  check_dimensions(agent.config(), instance);
  TrialRecord rec;
  reserve(rec, instance.horizon());
  const RewardSource reward = [&](Arm a, Step t) { return sample_reward(instance, a, t, rng); };
  for (Step t = 1; t <= instance.horizon(); ++t) {
    const auto r = agent.step(t, reward);
    record_step(rec, instance, t, r.arm, r.reward, r.forced);
  }
  rec.detections = agent.detections();
  return rec;
}

TrialRecord run_policy_episode(const PolicyParams& params, const PiecewiseInstance& instance, Rng& rng) {
  IndexPolicy policy(params, instance.num_arms());
  TrialRecord rec;
  reserve(rec, instance.horizon());
  for (Step t = 1; t <= instance.horizon(); ++t) {
    const Arm arm = policy.select();
    const double reward = sample_reward(instance, arm, t, rng);
    policy.update(arm, reward);
    record_step(rec, instance, t, arm, reward, false);
  }
  return rec;
}

void write_trial_csv(std::ostream& out, const TrialRecord& record) {
  out << "t,arm,forced,reward,instant_regret,cumulative_regret,restart\n";
  std::size_t next = 0;
  for (std::size_t i = 0; i < record.arms.size(); ++i) {
    const Step t = static_cast<Step>(i) + 1;
    bool restart = false;
    if (next < record.detections.size() && record.detections[next].time == t) {
      restart = true;
      ++next;
    }
    out << t << ',' << record.arms[i] + 1 << ',' << int(record.forced[i]) << ',' << format_double(record.rewards[i])
        << ',' << format_double(record.instant_regret[i]) << ',' << format_double(record.cumulative_regret[i]) << ','
        << int(restart) << '\n';
  }
}

TrialRecord read_trial_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"t", "arm", "forced", "reward",
                                                                                  "instant_regret",
                                                                                  "cumulative_regret", "restart"})
    throw ConfigError("trial csv: missing or unexpected header");
  TrialRecord rec;
  Step expected = 1;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw ConfigError("trial csv: row " + std::to_string(expected) + " has wrong field count");
    try {
      if (std::stoll(f[0]) != expected) throw ConfigError("trial csv: non-consecutive time at row " + f[0]);
      const long long arm = std::stoll(f[1]);
      if (arm < 1) throw ConfigError("trial csv: arm must be >= 1");
      rec.arms.push_back(static_cast<Arm>(arm - 1));
      rec.forced.push_back(static_cast<std::uint8_t>(std::stoi(f[2]) != 0));
      rec.rewards.push_back(std::stod(f[3]));
      rec.instant_regret.push_back(std::stod(f[4]));
      rec.cumulative_regret.push_back(std::stod(f[5]));
      if (std::stoi(f[6]) != 0) rec.detections.push_back({expected, rec.detections.size() + 2});
    } catch (const std::logic_error&) {
      throw ConfigError("trial csv: unparsable row " + std::to_string(expected));
    }
    ++expected;
  }
  return rec;
}

std::optional<Step> find_forced_exploration_violation(const TrialRecord& record, const DabConfig& cfg) {
  const Step T = record.length();
  Step start = 0;  // stretch covers (start, end]
  for (std::size_t seg = 0; seg <= record.detections.size(); ++seg) {
    const Step end = seg < record.detections.size() ? record.detections[seg].time : T;
    const Step period = exploration_frequency(seg + 1, cfg).period;
    if (period != kNoExploration) {
      for (Arm a = 0; a < cfg.num_arms; ++a) {
        Step prev = start;
        for (Step t = start + 1; t <= end; ++t) {
          const auto i = static_cast<std::size_t>(t - 1);
          if (record.forced[i] && record.arms[i] == a) {
            if (t - prev > period) return t;
            prev = t;
          }
        }
        if (end - prev >= period) return end;
      }
    }
    start = end;
  }
  return std::nullopt;
}

SeparationReport check_separation_condition(const PiecewiseInstance& instance, const PeriodFn& period,
                                            const GapHorizonFn& pre_window, const GapHorizonFn& latency) {
  SeparationReport report;
  const auto gaps = compute_gaps(instance);
  const double m = pre_window(gaps.min_change_gap, instance.horizon());
  const double d = latency(gaps.min_change_gap, instance.horizon());
  auto scaled = [](Step p, double base) {
    return p == kNoExploration ? std::numeric_limits<double>::infinity() : static_cast<double>(p) * base;
  };
  std::size_t satisfied = 0;
  for (std::size_t k = 1; k <= instance.num_changes(); ++k) {
    SeparationCheck c;
    c.k = k;
    c.interval_length = instance.boundary(k) - instance.boundary(k - 1);
    c.pre_window = scaled(period(k), m);
    c.prev_latency = k == 1 ? 0.0 : scaled(period(k - 1), d);
    c.satisfied = c.prev_latency + c.pre_window <= static_cast<double>(c.interval_length);
    satisfied += c.satisfied;
    report.checks.push_back(c);
  }
  if (!report.checks.empty())
    report.fraction_satisfied = static_cast<double>(satisfied) / static_cast<double>(report.checks.size());
  return report;
}

SeparationReport check_separation_condition(const PiecewiseInstance& instance, const DabConfig& cfg,
                                            const GapHorizonFn& pre_window, const GapHorizonFn& latency) {
  return check_separation_condition(
      instance, [&cfg](std::size_t k) { return exploration_frequency(k, cfg).period; }, pre_window, latency);
}

}  // namespace dab
