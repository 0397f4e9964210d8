#pragma once

// Streaming GLR and GSR change detectors over a single arm's sample history.
//
// Statistics are computed from running prefix sums, so a push is O(1) and an
// evaluation is O(n / split_stride) for GLR and O(n) for GSR.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dab/env.hpp"

namespace dab {

enum class DetectorKind { Glr, Gsr };
enum class Likelihood { Gaussian, BernoulliKl };
enum class ThresholdMode { Theoretical, Practical };

struct DetectorConfig {
  DetectorKind kind = DetectorKind::Glr;
  Likelihood likelihood = Likelihood::BernoulliKl;
  double sigma = 0.5;  ///< Gaussian likelihood only
  ThresholdMode threshold = ThresholdMode::Practical;
  double delta_f = 0.01;
  std::int64_t test_stride = 1;
  std::int64_t split_stride = 1;  ///< GLR only

  /// Throws ConfigError.
  void validate() const;
};

/// Short label: "B-GLR", "G-GLR", "B-GSR" or "G-GSR".
std::string detector_label(const DetectorConfig& cfg);
/// Parses a label into kind and likelihood; other fields keep `base`'s values.
DetectorConfig parse_detector_label(const std::string& label, DetectorConfig base = {});

ThresholdMode parse_threshold_mode(const std::string& name);
std::string to_string(ThresholdMode mode);

/// Theoretical: 6 ln(1 + ln n) + (5/2) ln(4 n^{3/2} / delta) + 11.
/// Practical:   ln(4 n^{3/2} / delta).
double beta_threshold(std::int64_t n, double delta_f, ThresholdMode mode);

/// Log-likelihood ratio of "mean change after sample s" against "no change",
/// with every mean profiled out. `prefix` holds n+1 running sums starting at
/// 0. Zero for s = n.
double split_log_ratio(std::span<const double> prefix, std::int64_t s, Likelihood likelihood, double sigma);

/// GLR statistic G_n: max of split_log_ratio over s in {stride, 2 stride, ...}
/// below n. Zero when n < 2.
double glr_statistic(std::span<const double> prefix, Likelihood likelihood, double sigma,
                     std::int64_t split_stride = 1);

/// GSR statistic log W_n = logsumexp_{s=1..n} split_log_ratio(s) - ln n.
/// Zero when n < 1.
double gsr_log_statistic(std::span<const double> prefix, Likelihood likelihood, double sigma);

struct DetectorEvaluation {
  std::int64_t n = 0;
  double statistic = 0.0;
  double threshold = 0.0;
  bool alarm = false;

  friend bool operator==(const DetectorEvaluation&, const DetectorEvaluation&) = default;
};

struct DetectorState {
  std::vector<double> prefix{0.0};  ///< prefix[i] = x_1 + ... + x_i
  bool alarmed = false;
  std::optional<DetectorEvaluation> last;  ///< evaluation made by the latest push, if any

  std::int64_t samples() const { return static_cast<std::int64_t>(prefix.size()) - 1; }

  friend bool operator==(const DetectorState&, const DetectorState&) = default;
};

/// Appends `sample`; evaluates the statistic when the sample count is a
/// multiple of test_stride. GLR alarms on G_n >= beta, GSR on
/// log W_n >= beta + ln n. The alarm latches until reset.
bool push_and_test(DetectorState& state, const DetectorConfig& cfg, double sample);
void reset(DetectorState& state);

/// Detector contract used by the DAB composer.
class ChangeDetector {
 public:
  virtual ~ChangeDetector() = default;
  /// Adds one sample and returns the (latched) alarm flag.
  virtual bool push(double sample) = 0;
  virtual bool alarmed() const = 0;
  virtual void reset() = 0;
  virtual std::int64_t samples() const = 0;
  /// Evaluation performed by the latest push, if the push triggered one.
  virtual std::optional<DetectorEvaluation> last_evaluation() const { return std::nullopt; }
};

class StatisticDetector final : public ChangeDetector {
 public:
  explicit StatisticDetector(DetectorConfig cfg);

  bool push(double sample) override { return push_and_test(state_, cfg_, sample); }
  bool alarmed() const override { return state_.alarmed; }
  void reset() override { dab::reset(state_); }
  std::int64_t samples() const override { return state_.samples(); }
  std::optional<DetectorEvaluation> last_evaluation() const override { return state_.last; }

  const DetectorConfig& config() const { return cfg_; }
  const DetectorState& state() const { return state_; }

 private:
  DetectorConfig cfg_;
  DetectorState state_;
};

/// Keeps no history and never alarms (detection disabled).
class NeverAlarmDetector final : public ChangeDetector {
 public:
  bool push(double) override { ++n_; return false; }
  bool alarmed() const override { return false; }
  void reset() override { n_ = 0; }
  std::int64_t samples() const override { return n_; }

 private:
  std::int64_t n_ = 0;
};

std::unique_ptr<ChangeDetector> make_detector(const DetectorConfig& cfg);

// ---------------------------------------------------------------------------
// Latency diagnostics

struct LatencyOptions {
  ArmModel stream_model = ArmModel::bernoulli();
  double pre_mean = 0.5;
  /// Number of change placements nu spread evenly over (m, M].
  std::int64_t placements = 4;
  std::uint64_t seed = 1;
};

struct LatencyProfile {
  /// Smallest t with P(tau >= nu + t) <= delta_D for every placement nu <= M - t.
  /// Empty when no such t exists within the horizon.
  std::optional<std::int64_t> latency;
  double false_alarm_rate = 0.0;  ///< P_inf(tau <= M), from change-free streams
  double mean_delay = 0.0;        ///< mean of tau - nu over alarms at or after nu
  std::vector<std::int64_t> placements;
  bool resolution_warning = false;  ///< trials * delta_D < 1
};

/// Monte Carlo latency estimate for a mean shift of `change_gap` after a
/// change-free prefix of `pre_window` samples, over horizon `horizon`.
LatencyProfile measure_latency_profile(const DetectorConfig& cfg, double change_gap, std::int64_t horizon,
                                       std::int64_t pre_window, double delta_d, std::int64_t trials,
                                       const LatencyOptions& options = {});

/// Parametric latency and pre-change window used by separation checks:
/// d(gap, T) = ceil(c_d sigma^2 / gap^2 (ln(4 T^{3/2} / delta_F) + ln(1 / delta_D)))
/// m(gap, T) = c_m d(gap, T)
struct LatencyModel {
  double c_d = 3.0;
  double c_m = 2.0;
  double sigma = 0.5;
  double delta_f = 0.01;
  double delta_d = 0.01;

  double latency(double gap, std::int64_t horizon) const;
  double pre_window(double gap, std::int64_t horizon) const;
};

}  // namespace dab
