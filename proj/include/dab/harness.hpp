#pragma once

// Monte Carlo experiment engine: per-trial seeding, parallel trials,
// dynamic regret, detection metrics and order-fixed aggregation.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dab/dab.hpp"

namespace dab {

/// An algorithm combination. "DAB:B-GLR+klUCB" composes a detector with a
/// policy; a bare policy name ("UCB", "klUCB", "MOSS") is the stationary
/// baseline with detection and forced exploration disabled.
struct Combo {
  std::string label;
  std::optional<DetectorConfig> detector;
  PolicyKind policy = PolicyKind::KlUcb;

  bool baseline() const { return !detector.has_value(); }
  std::string detector_name() const;  ///< "none" for baselines
};

/// Throws ConfigError. Detector fields other than kind and likelihood come
/// from `base`.
Combo parse_combo(const std::string& text, const DetectorConfig& base = {});

/// DabConfig for one combo: the combo's detector and policy on top of `base`.
/// Baselines get no detector and alpha0 = 0.
DabConfig combo_config(const Combo& combo, const DabConfig& base);

struct ExperimentSpec {
  Combo combo;
  GeometricEnvConfig env;  ///< arms, horizon, xi and ranges
  /// Fixed-instance mode when set; env.xi is then only a label.
  std::shared_ptr<const PiecewiseInstance> instance;
  DabConfig dab;           ///< alpha0, gamma, strides, policy parameters
  std::int64_t trials = 1;
  std::uint64_t base_seed = 1;
  std::size_t grid_points = 100;
};

struct ExperimentPlan {
  std::vector<ExperimentSpec> entries;
  std::size_t workers = 1;
};

// Trial i of an entry draws its environment from
//   derive_seed(base, {kEnvStream, bits(xi), i})
// and its rewards from
//   derive_seed(base, {kRewardStream, bits(xi), i}).
// The combo is deliberately not part of the derivation, so every combo at a
// given xi faces the same instances and the same reward noise.
inline constexpr std::uint64_t kEnvStream = 0x656e76;
inline constexpr std::uint64_t kRewardStream = 0x726577;
std::uint64_t env_seed(std::uint64_t base, double xi, std::int64_t trial);
std::uint64_t reward_seed(std::uint64_t base, double xi, std::int64_t trial);

/// Instance faced by trial `trial` of `spec`.
PiecewiseInstance trial_instance(const ExperimentSpec& spec, std::int64_t trial);
/// Full trajectory of one trial.
TrialRecord run_trial(const ExperimentSpec& spec, std::int64_t trial);

/// Sum over t of (best mean - mean of pulled arm), from true means.
double dynamic_regret(std::span<const Arm> pulls, const PiecewiseInstance& instance);

struct DetectionMetrics {
  std::size_t detections = 0;
  std::size_t true_detections = 0;
  std::size_t false_alarms = 0;
  std::vector<Step> delays;                 ///< one per true detection
  std::vector<std::size_t> missed_counts;   ///< change-points in (t_prev, t], per true detection

  double mean_delay() const;
  double mean_missed() const;
};

/// A restart at t is true when some change-point lies in (t_prev, t].
DetectionMetrics classify_detections(std::span<const Step> restarts, std::span<const Step> change_points);

/// t_j = round(j T / G) for j = 1..G, deduplicated (all of 1..T when T <= G).
std::vector<Step> trajectory_grid(Step horizon, std::size_t points);

/// Mean cumulative regret over `records` at each grid time.
Eigen::VectorXd regret_trajectory(std::span<const TrialRecord> records, std::span<const Step> grid);

struct AggregateStats {
  std::string combo;
  std::string detector;
  std::string policy;
  std::optional<double> xi;  ///< empty in fixed-instance mode
  Step horizon = 0;
  std::int64_t trials = 0;
  std::int64_t failed_trials = 0;

  double mean_regret = 0.0;
  double std_regret = 0.0;  ///< population form, 0 for a single trial
  double cp_mean = 0.0;
  double detections_mean = 0.0;
  double true_det_mean = 0.0;
  double false_alarm_mean = 0.0;
  double mean_delay = 0.0;              ///< pooled over all true detections; NaN when none
  double missed_until_next_mean = 0.0;  ///< pooled over all true detections; NaN when none
  double delay_sum = 0.0;
  std::int64_t delay_count = 0;

  std::vector<Step> grid;
  Eigen::VectorXd trajectory;
  std::vector<double> final_regrets;  ///< per successful trial, in trial order
};

/// Runs every (entry, trial) pair on `plan.workers` threads and reduces in
/// trial order, so results do not depend on the worker count. A trial that
/// runs out of memory is counted in failed_trials; other errors propagate.
std::vector<AggregateStats> run_plan(const ExperimentPlan& plan);

// combo,detector,policy,xi,T,trials,mean_regret,std_regret,cp_mean,
// detections_mean,true_det_mean,false_alarm_mean,mean_delay,missed_until_next_mean
void write_aggregate_csv(std::ostream& out, std::span<const AggregateStats> stats);
// combo,t,mean_cum_regret
void write_trajectory_csv(std::ostream& out, std::span<const AggregateStats> stats);
// combo,scope,true_detections,mean_delay. Scope is one xi value, "pooled"
// (all detections of the combo) or "xi_mean" (mean of the per-xi means).
void write_delay_summary_csv(std::ostream& out, std::span<const AggregateStats> stats);

}  // namespace dab
