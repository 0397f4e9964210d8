#pragma once

// Detection-augmented bandit: a stationary policy plus one change detector
// per arm, with round-robin forced exploration at the start of every period
// and a global restart whenever the pulled arm's detector alarms.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "dab/bandit.hpp"
#include "dab/detect.hpp"
#include "dab/env.hpp"

namespace dab {

/// Period sentinel meaning "never force-explore".
inline constexpr Step kNoExploration = std::numeric_limits<Step>::max();

struct DabConfig {
  std::size_t num_arms = 5;
  Step horizon = 100000;
  double alpha0 = 0.05;  ///< 0 disables forced exploration
  double gamma = 0.5;    ///< delta_F = delta_D = T^{-gamma}
  /// Detector template; its delta_f is replaced by T^{-gamma}. Empty means
  /// detection is disabled (plain stationary policy).
  std::optional<DetectorConfig> detector;
  PolicyParams policy;
  /// Feed policy-driven samples to the detectors too (forced samples always are).
  bool feed_policy_samples = true;

  double delta() const;
  /// Detector template with delta_f = T^{-gamma}.
  std::optional<DetectorConfig> resolved_detector() const;
  /// Throws ConfigError.
  void validate() const;
};

struct ExplorationSchedule {
  double alpha = 0.0;
  Step period = kNoExploration;  ///< P_k = ceil(A / alpha_k)
  bool clamped = false;          ///< alpha_k >= 1, reduced to pure round-robin
};

/// alpha_k = alpha0 sqrt(k A ln T / T) for the k-th interval (k >= 1).
ExplorationSchedule exploration_frequency(std::size_t k, const DabConfig& cfg);

struct Detection {
  Step time;             ///< restart time tau
  std::size_t interval;  ///< interval counter k after the restart

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct StepResult {
  Arm arm;
  double reward;
  bool forced;
  bool restarted;
};

using RewardSource = std::function<double(Arm, Step)>;
using DetectorFactory = std::function<std::unique_ptr<ChangeDetector>()>;

/// Called after a detector evaluation: (time, arm, evaluation).
using DetectorTrace = std::function<void(Step, Arm, const DetectorEvaluation&)>;

class DabAgent {
 public:
  explicit DabAgent(const DabConfig& cfg);
  /// Injects a policy and a per-arm detector factory (used by tests and
  /// custom compositions).
  DabAgent(const DabConfig& cfg, std::unique_ptr<BanditPolicy> policy, const DetectorFactory& make_detector);

  /// Plays time t (must be the previous t + 1).
  StepResult step(Step t, const RewardSource& reward);

  void set_trace(DetectorTrace trace) { trace_ = std::move(trace); }

  Step last_restart() const { return tau_; }
  std::size_t interval() const { return k_; }
  const ExplorationSchedule& schedule() const { return schedule_; }
  const BanditPolicy& policy() const { return *policy_; }
  const ChangeDetector& detector(Arm arm) const { return *detectors_[arm]; }
  const std::vector<Detection>& detections() const { return detections_; }
  const DabConfig& config() const { return cfg_; }

 private:
  void restart(Step t);

  DabConfig cfg_;
  std::unique_ptr<BanditPolicy> policy_;
  std::vector<std::unique_ptr<ChangeDetector>> detectors_;
  Step tau_ = 0;
  std::size_t k_ = 1;
  Step last_t_ = 0;
  ExplorationSchedule schedule_;
  std::vector<Detection> detections_;
  DetectorTrace trace_;
};

struct TrialRecord {
  std::vector<Arm> arms;
  std::vector<std::uint8_t> forced;
  std::vector<double> rewards;
  std::vector<double> instant_regret;
  std::vector<double> cumulative_regret;
  std::vector<Detection> detections;

  Step length() const { return static_cast<Step>(arms.size()); }
  double final_regret() const { return cumulative_regret.empty() ? 0.0 : cumulative_regret.back(); }

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Runs t = 1..T. Rewards come from `rng`, one draw per step.
TrialRecord run_episode(const DabConfig& cfg, const PiecewiseInstance& instance, Rng& rng,
                        const DetectorTrace& trace = {});
/// Same loop with an injected agent.
TrialRecord run_episode(DabAgent& agent, const PiecewiseInstance& instance, Rng& rng);

/// The bare stationary policy on its own, no exploration and no detection.
TrialRecord run_policy_episode(const PolicyParams& params, const PiecewiseInstance& instance, Rng& rng);

// CSV with header t,arm,forced,reward,instant_regret,cumulative_regret,restart.
// Arms are written 1-based.
void write_trial_csv(std::ostream& out, const TrialRecord& record);
/// Throws ConfigError on malformed input.
TrialRecord read_trial_csv(std::istream& in);

/// Counting check: inside every restart-free stretch each arm's
/// forced pulls in any window (i, j] number at least floor((j - i) / P_k).
/// Returns the time of the first offending forced gap, if any.
std::optional<Step> find_forced_exploration_violation(const TrialRecord& record, const DabConfig& cfg);

// ---------------------------------------------------------------------------
// Change-point separation diagnostic (d_{k-1} + m_k <= nu_k - nu_{k-1})

struct SeparationCheck {
  std::size_t k;  ///< change-point index, 1-based
  Step interval_length;
  double pre_window;    ///< m_k
  double prev_latency;  ///< d_{k-1}, 0 for k = 1
  bool satisfied;
};

struct SeparationReport {
  std::vector<SeparationCheck> checks;
  double fraction_satisfied = 1.0;  ///< 1 when there are no change-points
};

using GapHorizonFn = std::function<double(double gap, Step horizon)>;
using PeriodFn = std::function<Step(std::size_t k)>;

SeparationReport check_separation_condition(const PiecewiseInstance& instance, const PeriodFn& period,
                                            const GapHorizonFn& pre_window, const GapHorizonFn& latency);
/// Periods from exploration_frequency(k, cfg).
SeparationReport check_separation_condition(const PiecewiseInstance& instance, const DabConfig& cfg,
                                            const GapHorizonFn& pre_window, const GapHorizonFn& latency);

}  // namespace dab
