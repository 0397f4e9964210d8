#include "dab/env.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dab/csv.hpp"
#include "dab/error.hpp"

namespace dab {

PiecewiseInstance::PiecewiseInstance(Step horizon, std::vector<Step> change_points, Eigen::MatrixXd means,
                                     ArmModel model)
    : horizon_(horizon), change_points_(std::move(change_points)), means_(std::move(means)), model_(model) {
  if (horizon_ < 1) throw std::invalid_argument("instance: horizon must be >= 1");
  if (means_.rows() < 2) throw std::invalid_argument("instance: need at least 2 arms");
  if (static_cast<std::size_t>(means_.cols()) != change_points_.size() + 1)
    throw std::invalid_argument("instance: means must have one column per interval");
  Step prev = 1;
  for (Step nu : change_points_) {
    if (nu <= prev || nu > horizon_)
      throw std::invalid_argument("instance: change-points must be strictly increasing within 2..T");
    prev = nu;
  }
  if (!means_.allFinite()) throw std::invalid_argument("instance: non-finite mean");
  if (model_.family == RewardFamily::Bernoulli) {
    if ((means_.array() < 0.0).any() || (means_.array() > 1.0).any())
      throw std::invalid_argument("instance: Bernoulli means must lie in [0,1]");
  } else if (!(model_.sigma > 0.0)) {
    throw std::invalid_argument("instance: Gaussian sigma must be > 0");
  }
  for (Eigen::Index k = 0; k + 1 < means_.cols(); ++k) {
    if ((means_.col(k + 1) - means_.col(k)).cwiseAbs().maxCoeff() <= 0.0)
      throw std::invalid_argument("instance: change-point " + std::to_string(k + 1) + " changes no arm");
  }
  best_ = means_.colwise().maxCoeff().transpose();
}

Step PiecewiseInstance::boundary(std::size_t k) const {
  if (k == 0) return 1;
  if (k <= change_points_.size()) return change_points_[k - 1];
  if (k == change_points_.size() + 1) return horizon_ + 1;
  throw std::out_of_range("boundary index out of range");
}

std::size_t PiecewiseInstance::interval_of(Step t) const {
  auto it = std::upper_bound(change_points_.begin(), change_points_.end(), t);
  return static_cast<std::size_t>(it - change_points_.begin());
}

double GeometricEnvConfig::change_probability() const {
  return std::pow(static_cast<double>(horizon), -xi);
}

void GeometricEnvConfig::validate() const {
  if (num_arms < 2) throw ConfigError("env: arms must be >= 2");
  if (horizon < 1) throw ConfigError("env: horizon must be >= 1");
  if (!(xi > 0.0 && xi < 1.0)) throw ConfigError("env: xi must lie in (0,1)");
  if (!(magnitude_lo > 0.0 && magnitude_lo <= magnitude_hi))
    throw ConfigError("env: magnitude range must satisfy 0 < lo <= hi");
  if (!(initial_lo <= initial_hi)) throw ConfigError("env: initial mean range must satisfy lo <= hi");
  if (arm_model.family == RewardFamily::Bernoulli) {
    if (initial_lo < 0.0 || initial_hi > 1.0) throw ConfigError("env: Bernoulli initial means must lie in [0,1]");
    if (magnitude_hi > 1.0) throw ConfigError("env: Bernoulli change magnitude cannot exceed 1");
  } else if (!(arm_model.sigma > 0.0)) {
    throw ConfigError("env: Gaussian sigma must be > 0");
  }
}

double sample_reward(const PiecewiseInstance& instance, Arm arm, Step t, Rng& rng) {
  if (arm >= instance.num_arms()) throw std::invalid_argument("sample_reward: arm out of range");
  if (t < 1 || t > instance.horizon()) throw std::invalid_argument("sample_reward: time out of range");
  const double mu = instance.mean(arm, t);
  const auto& model = instance.arm_model();
  if (model.family == RewardFamily::Bernoulli) return uniform01(rng) < mu ? 1.0 : 0.0;
  return mu + model.sigma * std::normal_distribution<double>(0.0, 1.0)(rng);
}

namespace {

// Shift `mean` by a magnitude drawn from [lo, hi] with a random sign. For
// Bernoulli arms a move that would leave [0,1] takes the opposite direction;
// if neither direction fits (hi > 1/2) the overshoot is mirrored at the
// boundary and zero net shifts are redrawn.
double shifted_mean(double mean, const GeometricEnvConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> magnitude(cfg.magnitude_lo, cfg.magnitude_hi);
  const bool bounded = cfg.arm_model.family == RewardFamily::Bernoulli;
  for (;;) {
    const double m = magnitude(rng);
    const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    double next = mean + sign * m;
    if (bounded && (next < 0.0 || next > 1.0)) {
      const double flipped = mean - sign * m;
      if (flipped >= 0.0 && flipped <= 1.0) {
        next = flipped;
      } else {
        next = next > 1.0 ? 2.0 - next : -next;
        next = std::clamp(next, 0.0, 1.0);
      }
    }
    if (next != mean) return next;
  }
}

}  // namespace

PiecewiseInstance generate_geometric_instance(const GeometricEnvConfig& cfg, Rng& rng) {
  cfg.validate();
  const double rho = cfg.change_probability();
  std::vector<Step> change_points;
  if (rho < 1.0) {
    std::geometric_distribution<Step> failures(rho);
    Step t = 1;
    for (;;) {
      const Step length = failures(rng) + 1;
      if (length > cfg.horizon - t) break;
      t += length;
      change_points.push_back(t);
    }
  } else {
    for (Step t = 2; t <= cfg.horizon; ++t) change_points.push_back(t);
  }

  const auto arms = static_cast<Eigen::Index>(cfg.num_arms);
  Eigen::MatrixXd means(arms, static_cast<Eigen::Index>(change_points.size() + 1));
  std::uniform_real_distribution<double> initial(cfg.initial_lo, cfg.initial_hi);
  for (Eigen::Index a = 0; a < arms; ++a) means(a, 0) = initial(rng);
  std::uniform_int_distribution<Eigen::Index> pick_arm(0, arms - 1);
  for (Eigen::Index k = 1; k < means.cols(); ++k) {
    means.col(k) = means.col(k - 1);
    if (cfg.change_scope == ChangeScope::AllArms) {
      for (Eigen::Index a = 0; a < arms; ++a) means(a, k) = shifted_mean(means(a, k - 1), cfg, rng);
    } else {
      const Eigen::Index a = pick_arm(rng);
      means(a, k) = shifted_mean(means(a, k - 1), cfg, rng);
    }
  }
  return PiecewiseInstance(cfg.horizon, std::move(change_points), std::move(means), cfg.arm_model);
}

GapSummary compute_gaps(const PiecewiseInstance& instance) {
  const auto& mu = instance.means();
  GapSummary g;
  g.subopt_gaps = (-mu).rowwise() + mu.colwise().maxCoeff();
  g.max_subopt_gap = g.subopt_gaps.maxCoeff();
  const auto n = static_cast<Eigen::Index>(instance.num_changes());
  g.change_gaps.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) g.change_gaps(k) = (mu.col(k + 1) - mu.col(k)).cwiseAbs().maxCoeff();
  g.min_change_gap = n > 0 ? g.change_gaps.minCoeff() : std::numeric_limits<double>::infinity();
  g.min_separation = instance.horizon();
  for (std::size_t k = 1; k <= instance.num_changes(); ++k)
    g.min_separation = std::min(g.min_separation, instance.boundary(k) - instance.boundary(k - 1));
  return g;
}

double oracle_best_mean(const PiecewiseInstance& instance, Step t) {
  if (t < 1 || t > instance.horizon()) throw std::invalid_argument("oracle_best_mean: time out of range");
  return instance.best_mean_in_interval(instance.interval_of(t));
}

void write_instance(std::ostream& out, const PiecewiseInstance& instance) {
  const auto& model = instance.arm_model();
  out << "dab-instance 1\n";
  out << "arms " << instance.num_arms() << "\n";
  out << "horizon " << instance.horizon() << "\n";
  out << "model " << (model.family == RewardFamily::Bernoulli ? "bernoulli" : "gaussian") << " "
      << format_double(model.sigma) << "\n";
  out << "changes " << instance.num_changes() << "\n";
  for (Step nu : instance.change_points()) out << nu << "\n";
  out << "means\n";
  const auto& mu = instance.means();
  for (Eigen::Index k = 0; k < mu.cols(); ++k) {
    for (Eigen::Index a = 0; a < mu.rows(); ++a) out << (a ? " " : "") << format_double(mu(a, k));
    out << "\n";
  }
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::istringstream next(const char* what) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return std::istringstream(line);
    }
    throw ConfigError("instance: unexpected end of input, expected " + std::string(what));
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("instance line " + std::to_string(line_no_) + ": " + msg);
  }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

template <class T>
T keyed_value(LineReader& reader, const std::string& key) {
  auto line = reader.next(key.c_str());
  std::string got;
  T value{};
  if (!(line >> got >> value) || got != key) reader.fail("expected '" + key + " <value>'");
  return value;
}

}  // namespace

PiecewiseInstance read_instance(std::istream& in) {
  LineReader reader(in);
  if (keyed_value<int>(reader, "dab-instance") != 1) reader.fail("unsupported instance format version");
  const auto arms = keyed_value<long long>(reader, "arms");
  const auto horizon = keyed_value<long long>(reader, "horizon");
  if (arms < 2 || horizon < 1) reader.fail("arms must be >= 2 and horizon >= 1");

  ArmModel model;
  {
    auto line = reader.next("model");
    std::string key, family;
    if (!(line >> key >> family >> model.sigma) || key != "model") reader.fail("expected 'model <family> <sigma>'");
    if (family == "bernoulli") model.family = RewardFamily::Bernoulli;
    else if (family == "gaussian") model.family = RewardFamily::Gaussian;
    else reader.fail("unknown model family '" + family + "'");
  }
  const auto changes = keyed_value<long long>(reader, "changes");
  if (changes < 0 || changes >= horizon) reader.fail("invalid change-point count");
  std::vector<Step> nus(static_cast<std::size_t>(changes));
  for (auto& nu : nus) {
    auto line = reader.next("change-point");
    if (!(line >> nu)) reader.fail("expected a change-point");
  }
  {
    auto line = reader.next("means");
    std::string key;
    if (!(line >> key) || key != "means") reader.fail("expected 'means'");
  }
  Eigen::MatrixXd means(arms, changes + 1);
  for (Eigen::Index k = 0; k < means.cols(); ++k) {
    auto line = reader.next("interval means");
    for (Eigen::Index a = 0; a < arms; ++a)
      if (!(line >> means(a, k))) reader.fail("expected " + std::to_string(arms) + " means");
  }
  try {
    return PiecewiseInstance(horizon, std::move(nus), std::move(means), model);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace dab
