#pragma once

// Piecewise-stationary bandit environments.
//
// Time is 1-based (t in 1..T) and arms are 0-based indices. An instance with
// N change-points nu_1 < ... < nu_N has N+1 stationary intervals; interval k
// (0-based) covers [nu_k, nu_{k+1}) with the sentinels nu_0 = 1 and
// nu_{N+1} = T + 1. Means are stored column-per-interval in an A x (N+1)
// matrix.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dab/rng.hpp"

namespace dab {

using Arm = std::size_t;
using Step = std::int64_t;

enum class RewardFamily { Bernoulli, Gaussian };

struct ArmModel {
  RewardFamily family = RewardFamily::Bernoulli;
  /// Sub-Gaussian scale. Fixed at 1/2 for Bernoulli rewards.
  double sigma = 0.5;

  static ArmModel bernoulli() { return {RewardFamily::Bernoulli, 0.5}; }
  static ArmModel gaussian(double sigma) { return {RewardFamily::Gaussian, sigma}; }
};

class PiecewiseInstance {
 public:
  /// Throws std::invalid_argument when any instance invariant fails.
  PiecewiseInstance(Step horizon, std::vector<Step> change_points, Eigen::MatrixXd means,
                    ArmModel model = ArmModel::bernoulli());

  std::size_t num_arms() const { return static_cast<std::size_t>(means_.rows()); }
  Step horizon() const { return horizon_; }
  std::size_t num_changes() const { return change_points_.size(); }
  std::size_t num_intervals() const { return change_points_.size() + 1; }

  /// nu_1..nu_N (sentinels excluded).
  const std::vector<Step>& change_points() const { return change_points_; }
  /// nu_k for k in 0..N+1, sentinels included.
  Step boundary(std::size_t k) const;
  /// 0-based index of the interval containing t.
  std::size_t interval_of(Step t) const;

  const Eigen::MatrixXd& means() const { return means_; }
  double mean(Arm arm, Step t) const { return means_(static_cast<Eigen::Index>(arm), static_cast<Eigen::Index>(interval_of(t))); }
  double best_mean_in_interval(std::size_t k) const { return best_(static_cast<Eigen::Index>(k)); }
  const ArmModel& arm_model() const { return model_; }

  friend bool operator==(const PiecewiseInstance& a, const PiecewiseInstance& b) {
    return a.horizon_ == b.horizon_ && a.change_points_ == b.change_points_ && a.means_ == b.means_ &&
           a.model_.family == b.model_.family && a.model_.sigma == b.model_.sigma;
  }

 private:
  Step horizon_;
  std::vector<Step> change_points_;
  Eigen::MatrixXd means_;
  Eigen::VectorXd best_;
  ArmModel model_;
};

struct GapSummary {
  Eigen::MatrixXd subopt_gaps;   ///< Delta_{a,k}, A x (N+1)
  Eigen::VectorXd change_gaps;   ///< Delta_{c,k}, length N
  double min_change_gap;         ///< +inf when N = 0
  double max_subopt_gap;         ///< C
  Step min_separation;           ///< L_T; equals T when N = 0
};

/// Which arms move at a change-point: one uniformly chosen arm, or every arm
/// independently.
enum class ChangeScope { OneArm, AllArms };

struct GeometricEnvConfig {
  std::size_t num_arms = 5;
  Step horizon = 100000;
  double xi = 0.5;
  double magnitude_lo = 0.1;
  double magnitude_hi = 0.4;
  double initial_lo = 0.1;
  double initial_hi = 0.9;
  ArmModel arm_model = ArmModel::bernoulli();
  ChangeScope change_scope = ChangeScope::AllArms;

  /// Change probability rho = T^{-xi}.
  double change_probability() const;
  /// Throws ConfigError.
  void validate() const;
};

/// One reward draw for `arm` at time `t`. Bernoulli draws consume exactly one
/// uniform variate so that reward streams line up across policies.
double sample_reward(const PiecewiseInstance& instance, Arm arm, Step t, Rng& rng);

/// Geometric(rho) interval lengths on {1,2,...}; at each change-point the
/// arms selected by change_scope shift by +-U[lo,hi].
PiecewiseInstance generate_geometric_instance(const GeometricEnvConfig& cfg, Rng& rng);

GapSummary compute_gaps(const PiecewiseInstance& instance);

/// max_a mu_{a,k(t)}.
double oracle_best_mean(const PiecewiseInstance& instance, Step t);

// Line-oriented text form:
//
//   dab-instance 1
//   arms <A>
//   horizon <T>
//   model <bernoulli|gaussian> <sigma>
//   changes <N>
//   <nu_1>
//   ...
//   <nu_N>
//   means
//   <mu_{1,1}> ... <mu_{A,1}>        (one line per interval)
//
// Blank lines and lines starting with '#' are ignored.
void write_instance(std::ostream& out, const PiecewiseInstance& instance);
/// Throws ConfigError on malformed input.
PiecewiseInstance read_instance(std::istream& in);

}  // namespace dab
