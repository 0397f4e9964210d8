#pragma once

// Stationary index policies (UCB, klUCB, MOSS) behind one select/update/reset
// contract. A policy only ever sees the samples it chose itself.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dab/env.hpp"

namespace dab {

enum class PolicyKind { Ucb, KlUcb, Moss };

std::string to_string(PolicyKind kind);
/// Accepts "UCB", "klUCB", "MOSS" (case-insensitive). Throws ConfigError.
PolicyKind parse_policy_kind(const std::string& name);

struct PolicyParams {
  PolicyKind kind = PolicyKind::KlUcb;
  double sigma = 1.0;    ///< UCB and MOSS scale
  double kl_c = 3.0;     ///< klUCB exploration constant
  Step horizon = 0;      ///< MOSS only
};

struct PolicyState {
  std::vector<std::int64_t> pulls;
  std::vector<double> sums;
  std::int64_t steps = 0;  ///< t_B, policy-driven pulls since the last reset

  PolicyState() = default;
  explicit PolicyState(std::size_t arms) : pulls(arms, 0), sums(arms, 0.0) {}

  std::size_t num_arms() const { return pulls.size(); }
  double mean(Arm a) const { return pulls[a] ? sums[a] / static_cast<double>(pulls[a]) : 0.0; }

  friend bool operator==(const PolicyState&, const PolicyState&) = default;
};

/// Bernoulli KL divergence kl(p, q) with 0 log 0 = 0. p is clamped to [0,1];
/// q is clamped to [1e-9, 1 - 1e-9].
double bernoulli_kl(double p, double q);

/// mean + sqrt(2 sigma^2 ln(step) / pulls). Requires pulls >= 1, step >= 1.
double ucb_index(double mean, std::int64_t pulls, std::int64_t step, double sigma);

/// Largest q in [mean, 1) with pulls * kl(mean, q) <= ln(step) + c ln ln(step).
/// ln ln(step) is taken as 0 for step < 3 and mean is clamped to
/// [1e-9, 1 - 1e-9]. Root accuracy is well below 1e-9.
double klucb_index(double mean, std::int64_t pulls, std::int64_t step, double c);

/// mean + sigma * sqrt(max(0, ln(horizon / (arms * pulls))) / pulls).
double moss_index(double mean, std::int64_t pulls, Step horizon, std::size_t arms, double sigma);

/// Index of an arm with at least one pull.
double policy_index(const PolicyState& state, const PolicyParams& params, Arm arm);

/// Lowest-indexed unpulled arm, else the lowest-indexed argmax of the index.
Arm select(const PolicyState& state, const PolicyParams& params);
void update(PolicyState& state, Arm arm, double reward);
void reset(PolicyState& state);

/// Policy contract used by the DAB composer.
class BanditPolicy {
 public:
  virtual ~BanditPolicy() = default;
  virtual Arm select() const = 0;
  virtual void update(Arm arm, double reward) = 0;
  virtual void reset() = 0;
  virtual std::size_t num_arms() const = 0;
  /// Policy-driven pulls since the last reset (t_B).
  virtual std::int64_t steps() const = 0;
};

class IndexPolicy final : public BanditPolicy {
 public:
  IndexPolicy(PolicyParams params, std::size_t arms) : params_(params), state_(arms) {}

  Arm select() const override { return dab::select(state_, params_); }
  void update(Arm arm, double reward) override { dab::update(state_, arm, reward); }
  void reset() override { dab::reset(state_); }
  std::size_t num_arms() const override { return state_.num_arms(); }
  std::int64_t steps() const override { return state_.steps; }

  const PolicyParams& params() const { return params_; }
  const PolicyState& state() const { return state_; }

 private:
  PolicyParams params_;
  PolicyState state_;
};

std::unique_ptr<BanditPolicy> make_policy(const PolicyParams& params, std::size_t arms);

}  // namespace dab
