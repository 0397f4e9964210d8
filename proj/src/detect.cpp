#include "dab/detect.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dab/error.hpp"

namespace dab {

namespace {

constexpr double kMeanClamp = 1e-9;

// p ln p + (1-p) ln(1-p) with 0 ln 0 = 0.
double neg_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h += p * std::log(p);
  if (p < 1.0) h += (1.0 - p) * std::log1p(-p);
  return h;
}

// Per-evaluation constants shared by every split of one prefix buffer.
struct SplitContext {
  std::span<const double> prefix;
  std::int64_t n;
  Likelihood likelihood;
  double inv_two_n_var = 0.0;  // Gaussian: 1 / (2 n sigma^2)
  double log_mean = 0.0;       // Bernoulli: ln q, ln(1-q) with q the pooled mean
  double log_comp = 0.0;
  bool degenerate = false;     // Bernoulli: pooled mean on the boundary, all samples equal

  SplitContext(std::span<const double> p, Likelihood lik, double sigma)
      : prefix(p), n(static_cast<std::int64_t>(p.size()) - 1), likelihood(lik) {
    if (n < 1) return;
    if (likelihood == Likelihood::Gaussian) {
      inv_two_n_var = 1.0 / (2.0 * static_cast<double>(n) * sigma * sigma);
    } else {
      const double pooled = prefix[n] / static_cast<double>(n);
      degenerate = pooled <= 0.0 || pooled >= 1.0;
      const double q = std::clamp(pooled, kMeanClamp, 1.0 - kMeanClamp);
      log_mean = std::log(q);
      log_comp = std::log1p(-q);
    }
  }

  double operator()(std::int64_t s) const {
    if (s <= 0 || s >= n || degenerate) return 0.0;
    const double head = prefix[s];
    const double tail = prefix[n] - head;
    const double ns = static_cast<double>(s);
    const double nt = static_cast<double>(n - s);
    if (likelihood == Likelihood::Gaussian) {
      const double diff = head / ns - tail / nt;
      return std::max(0.0, ns * nt * diff * diff * inv_two_n_var);
    }
    // s kl(p1, q) + (n-s) kl(p2, q), expanded so that ln q and ln(1-q) are
    // evaluated once per buffer.
    const double p1 = std::clamp(head / ns, 0.0, 1.0);
    const double p2 = std::clamp(tail / nt, 0.0, 1.0);
    const double ones = ns * p1 + nt * p2;
    const double zeros = (ns + nt) - ones;
    const double value = ns * neg_entropy(p1) + nt * neg_entropy(p2) - ones * log_mean - zeros * log_comp;
    return std::max(0.0, value);
  }
};

}  // namespace

void DetectorConfig::validate() const {
  if (test_stride < 1 || split_stride < 1) throw ConfigError("detector: strides must be >= 1");
  if (!(delta_f > 0.0 && delta_f < 1.0)) throw ConfigError("detector: delta_F must lie in (0,1)");
  if (likelihood == Likelihood::Gaussian && !(sigma > 0.0)) throw ConfigError("detector: sigma must be > 0");
}

std::string detector_label(const DetectorConfig& cfg) {
  std::string label = cfg.likelihood == Likelihood::BernoulliKl ? "B-" : "G-";
  label += cfg.kind == DetectorKind::Glr ? "GLR" : "GSR";
  return label;
}

DetectorConfig parse_detector_label(const std::string& text, DetectorConfig base) {
  std::string label = text;
  std::transform(label.begin(), label.end(), label.begin(), [](unsigned char ch) { return std::toupper(ch); });
  if (label == "B-GLR") { base.likelihood = Likelihood::BernoulliKl; base.kind = DetectorKind::Glr; }
  else if (label == "G-GLR") { base.likelihood = Likelihood::Gaussian; base.kind = DetectorKind::Glr; }
  else if (label == "B-GSR") { base.likelihood = Likelihood::BernoulliKl; base.kind = DetectorKind::Gsr; }
  else if (label == "G-GSR") { base.likelihood = Likelihood::Gaussian; base.kind = DetectorKind::Gsr; }
  else throw ConfigError("unknown detector '" + text + "' (expected B-GLR, G-GLR, B-GSR or G-GSR)");
  return base;
}

ThresholdMode parse_threshold_mode(const std::string& name) {
  if (name == "practical") return ThresholdMode::Practical;
  if (name == "theoretical") return ThresholdMode::Theoretical;
  throw ConfigError("unknown threshold mode '" + name + "' (expected practical or theoretical)");
}

std::string to_string(ThresholdMode mode) {
  return mode == ThresholdMode::Practical ? "practical" : "theoretical";
}

double beta_threshold(std::int64_t n, double delta_f, ThresholdMode mode) {
  if (n < 1) throw std::invalid_argument("beta_threshold: n must be >= 1");
  const double nd = static_cast<double>(n);
  const double log_term = std::log(4.0 * nd * std::sqrt(nd) / delta_f);
  if (mode == ThresholdMode::Practical) return log_term;
  return 6.0 * std::log(1.0 + std::log(nd)) + 2.5 * log_term + 11.0;
}

double split_log_ratio(std::span<const double> prefix, std::int64_t s, Likelihood likelihood, double sigma) {
  return SplitContext(prefix, likelihood, sigma)(s);
}

double glr_statistic(std::span<const double> prefix, Likelihood likelihood, double sigma, std::int64_t split_stride) {
  const SplitContext ratio(prefix, likelihood, sigma);
  if (ratio.n < 2) return 0.0;
  const std::int64_t stride = std::max<std::int64_t>(split_stride, 1);
  double best = 0.0;
  for (std::int64_t s = stride; s < ratio.n; s += stride) best = std::max(best, ratio(s));
  return best;
}

double gsr_log_statistic(std::span<const double> prefix, Likelihood likelihood, double sigma) {
  const SplitContext ratio(prefix, likelihood, sigma);
  if (ratio.n < 1) return 0.0;
  // Streaming log-sum-exp; the s = n term contributes exp(0).
  double peak = 0.0;
  double sum = 1.0;
  for (std::int64_t s = 1; s < ratio.n; ++s) {
    const double l = ratio(s);
    if (l > peak) {
      sum = sum * std::exp(peak - l) + 1.0;
      peak = l;
    } else {
      sum += std::exp(l - peak);
    }
  }
  return peak + std::log(sum) - std::log(static_cast<double>(ratio.n));
}

bool push_and_test(DetectorState& state, const DetectorConfig& cfg, double sample) {
  state.prefix.push_back(state.prefix.back() + sample);
  state.last.reset();
  if (state.alarmed) return true;
  const std::int64_t n = state.samples();
  if (n % cfg.test_stride != 0) return false;

  DetectorEvaluation eval;
  eval.n = n;
  eval.threshold = beta_threshold(n, cfg.delta_f, cfg.threshold);
  if (cfg.kind == DetectorKind::Glr) {
    eval.statistic = glr_statistic(state.prefix, cfg.likelihood, cfg.sigma, cfg.split_stride);
  } else {
    eval.statistic = gsr_log_statistic(state.prefix, cfg.likelihood, cfg.sigma);
    eval.threshold += std::log(static_cast<double>(n));
  }
  eval.alarm = eval.statistic >= eval.threshold;
  state.alarmed = eval.alarm;
  state.last = eval;
  return state.alarmed;
}

void reset(DetectorState& state) {
  state.prefix.assign(1, 0.0);
  state.alarmed = false;
  state.last.reset();
}

StatisticDetector::StatisticDetector(DetectorConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::unique_ptr<ChangeDetector> make_detector(const DetectorConfig& cfg) {
  return std::make_unique<StatisticDetector>(cfg);
}

namespace {

double draw(const ArmModel& model, double mean, Rng& rng) {
  if (model.family == RewardFamily::Bernoulli) return uniform01(rng) < mean ? 1.0 : 0.0;
  return mean + model.sigma * std::normal_distribution<double>(0.0, 1.0)(rng);
}

// First alarm index in 1..horizon for a stream that shifts from pre_mean to
// post_mean at sample `change` (change > horizon means no shift).
std::optional<std::int64_t> first_alarm(const DetectorConfig& cfg, const LatencyOptions& opt, double post_mean,
                                        std::int64_t change, std::int64_t horizon, Rng& rng) {
  DetectorState state;
  state.prefix.reserve(static_cast<std::size_t>(horizon) + 1);
  for (std::int64_t i = 1; i <= horizon; ++i) {
    const double x = draw(opt.stream_model, i < change ? opt.pre_mean : post_mean, rng);
    if (push_and_test(state, cfg, x)) return i;
  }
  return std::nullopt;
}

}  // namespace

LatencyProfile measure_latency_profile(const DetectorConfig& cfg, double change_gap, std::int64_t horizon,
                                       std::int64_t pre_window, double delta_d, std::int64_t trials,
                                       const LatencyOptions& options) {
  cfg.validate();
  if (pre_window < 0 || pre_window >= horizon) throw std::invalid_argument("latency: need 0 <= m < M");
  if (trials < 1) throw std::invalid_argument("latency: trials must be >= 1");
  if (!(delta_d > 0.0 && delta_d <= 1.0)) throw std::invalid_argument("latency: delta_D must lie in (0,1]");
  const double post_mean = options.pre_mean + change_gap;
  if (options.stream_model.family == RewardFamily::Bernoulli && (post_mean < 0.0 || post_mean > 1.0))
    throw std::invalid_argument("latency: post-change Bernoulli mean outside [0,1]");

  LatencyProfile profile;
  profile.resolution_warning = delta_d < 1.0 && static_cast<double>(trials) * delta_d < 1.0;

  const std::int64_t count = std::max<std::int64_t>(1, options.placements);
  const std::int64_t span = horizon - pre_window;
  for (std::int64_t j = 0; j < count; ++j) profile.placements.push_back(pre_window + 1 + (j * span) / count);

  constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();
  const auto allowed = static_cast<std::int64_t>(std::floor(delta_d * static_cast<double>(trials) + 1e-12));
  std::vector<std::int64_t> quantile(profile.placements.size());
  double delay_sum = 0.0;
  std::int64_t delay_count = 0;

  for (std::size_t j = 0; j < profile.placements.size(); ++j) {
    const std::int64_t nu = profile.placements[j];
    std::vector<std::int64_t> delays;  // tau - nu; kNever when no alarm
    delays.reserve(static_cast<std::size_t>(trials));
    for (std::int64_t i = 0; i < trials; ++i) {
      Rng rng(derive_seed(options.seed, {1, j, static_cast<std::uint64_t>(i)}));
      const auto tau = first_alarm(cfg, options, post_mean, nu, horizon, rng);
      const std::int64_t delay = tau ? *tau - nu : kNever;
      if (tau && delay >= 0) {
        delay_sum += static_cast<double>(delay);
        ++delay_count;
      }
      delays.push_back(delay);
    }
    // Smallest t >= 0 with #{delay >= t} <= allowed.
    if (allowed >= trials) {
      quantile[j] = 0;
      continue;
    }
    std::sort(delays.begin(), delays.end(), std::greater<>());
    const std::int64_t v = delays[static_cast<std::size_t>(allowed)];
    quantile[j] = v == kNever ? kNever : std::max<std::int64_t>(0, v + 1);
  }

  // Placement j constrains t only while nu_j <= M - t.
  std::vector<std::int64_t> candidates{0};
  for (std::size_t j = 0; j < quantile.size(); ++j) {
    if (quantile[j] != kNever) candidates.push_back(quantile[j]);
    candidates.push_back(horizon - profile.placements[j] + 1);
  }
  std::sort(candidates.begin(), candidates.end());
  for (auto t : candidates) {
    if (t > horizon) break;
    bool ok = true;
    for (std::size_t j = 0; j < quantile.size() && ok; ++j)
      if (profile.placements[j] <= horizon - t && quantile[j] > t) ok = false;
    if (ok) {
      profile.latency = t;
      break;
    }
  }
  profile.mean_delay = delay_count ? delay_sum / static_cast<double>(delay_count) : 0.0;

  std::int64_t false_alarms = 0;
  for (std::int64_t i = 0; i < trials; ++i) {
    Rng rng(derive_seed(options.seed, {2, static_cast<std::uint64_t>(i)}));
    if (first_alarm(cfg, options, post_mean, horizon + 1, horizon, rng)) ++false_alarms;
  }
  profile.false_alarm_rate = static_cast<double>(false_alarms) / static_cast<double>(trials);
  return profile;
}

double LatencyModel::latency(double gap, std::int64_t horizon) const {
  const double T = static_cast<double>(horizon);
  const double info = std::log(4.0 * T * std::sqrt(T) / delta_f) + std::log(1.0 / delta_d);
  return std::ceil(c_d * sigma * sigma / (gap * gap) * info);
}

double LatencyModel::pre_window(double gap, std::int64_t horizon) const {
  return c_m * latency(gap, horizon);
}

}  // namespace dab
