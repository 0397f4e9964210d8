#include "dab/bandit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "dab/error.hpp"

namespace dab {

namespace {
constexpr double kKlClamp = 1e-9;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}
}  // namespace

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Ucb: return "UCB";
    case PolicyKind::KlUcb: return "klUCB";
    case PolicyKind::Moss: return "MOSS";
  }
  return "?";
}

PolicyKind parse_policy_kind(const std::string& name) {
  const auto n = lower(name);
  if (n == "ucb") return PolicyKind::Ucb;
  if (n == "klucb") return PolicyKind::KlUcb;
  if (n == "moss") return PolicyKind::Moss;
  throw ConfigError("unknown policy '" + name + "'");
}

double bernoulli_kl(double p, double q) {
  p = std::clamp(p, 0.0, 1.0);
  q = std::clamp(q, kKlClamp, 1.0 - kKlClamp);
  double kl = 0.0;
  if (p > 0.0) kl += p * std::log(p / q);
  if (p < 1.0) kl += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  return std::max(kl, 0.0);
}

double ucb_index(double mean, std::int64_t pulls, std::int64_t step, double sigma) {
  if (pulls < 1) throw std::invalid_argument("ucb_index: pulls must be >= 1");
  const double t = static_cast<double>(std::max<std::int64_t>(step, 1));
  return mean + std::sqrt(2.0 * sigma * sigma * std::log(t) / static_cast<double>(pulls));
}

double klucb_index(double mean, std::int64_t pulls, std::int64_t step, double c) {
  if (pulls < 1) throw std::invalid_argument("klucb_index: pulls must be >= 1");
  const double p = std::clamp(mean, kKlClamp, 1.0 - kKlClamp);
  const double t = static_cast<double>(std::max<std::int64_t>(step, 1));
  const double loglog = step >= 3 ? std::log(std::log(t)) : 0.0;
  const double level = (std::log(t) + c * loglog) / static_cast<double>(pulls);
  if (!(level > 0.0)) return p;

  // g(q) = kl(p, q) - level is convex and increasing on [p, 1). Pinsker
  // (kl >= 2 (q-p)^2) gives a start with g >= 0, from which Newton descends
  // monotonically onto the root. The bracket guards against round-off.
  const double upper = 1.0 - kKlClamp;
  double lo = p;
  double hi = std::min(upper, p + std::sqrt(level / 2.0));
  if (bernoulli_kl(p, hi) <= level) return hi;

  double q = hi;
  for (int it = 0; it < 100; ++it) {
    const double g = bernoulli_kl(p, q) - level;
    if (g > 0.0) hi = q; else lo = q;
    if (g == 0.0 || hi - lo < 1e-15) break;
    const double slope = (q - p) / (q * (1.0 - q));
    double next = slope > 0.0 ? q - g / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool converged = std::abs(next - q) < 1e-15;
    q = next;
    if (converged) break;
  }
  return q;
}

double moss_index(double mean, std::int64_t pulls, Step horizon, std::size_t arms, double sigma) {
  if (pulls < 1) throw std::invalid_argument("moss_index: pulls must be >= 1");
  const double n = static_cast<double>(pulls);
  const double ratio = static_cast<double>(horizon) / (static_cast<double>(arms) * n);
  return mean + sigma * std::sqrt(std::max(0.0, std::log(ratio)) / n);
}

double policy_index(const PolicyState& state, const PolicyParams& params, Arm arm) {
  const auto n = state.pulls[arm];
  const double mu = state.mean(arm);
  switch (params.kind) {
    case PolicyKind::Ucb: return ucb_index(mu, n, state.steps, params.sigma);
    case PolicyKind::KlUcb: return klucb_index(mu, n, state.steps, params.kl_c);
    case PolicyKind::Moss: return moss_index(mu, n, params.horizon, state.num_arms(), params.sigma);
  }
  return mu;
}

Arm select(const PolicyState& state, const PolicyParams& params) {
  const auto arms = state.num_arms();
  for (Arm a = 0; a < arms; ++a)
    if (state.pulls[a] == 0) return a;
  Arm best = 0;
  double best_index = policy_index(state, params, 0);
  for (Arm a = 1; a < arms; ++a) {
    const double idx = policy_index(state, params, a);
    if (idx > best_index) {
      best = a;
      best_index = idx;
    }
  }
  return best;
}

void update(PolicyState& state, Arm arm, double reward) {
  if (arm >= state.num_arms()) throw std::invalid_argument("update: arm out of range");
  ++state.pulls[arm];
  state.sums[arm] += reward;
  ++state.steps;
}

void reset(PolicyState& state) {
  std::fill(state.pulls.begin(), state.pulls.end(), 0);
  std::fill(state.sums.begin(), state.sums.end(), 0.0);
  state.steps = 0;
}

std::unique_ptr<BanditPolicy> make_policy(const PolicyParams& params, std::size_t arms) {
  return std::make_unique<IndexPolicy>(params, arms);
}

}  // namespace dab
