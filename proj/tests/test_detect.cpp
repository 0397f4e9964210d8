#include <doctest.h>

#include <cmath>

#include "dab/detect.hpp"
#include "dab/error.hpp"
#include "oracles.hpp"

using namespace dab;

namespace {

std::vector<double> random_sequence(Rng& rng, bool bernoulli, std::size_t n) {
  std::vector<double> x(n);
  const double p = uniform01(rng);
  const std::size_t change = 1 + static_cast<std::size_t>(uniform01(rng) * double(n));
  const double q = uniform01(rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = i < change ? p : q;
    x[i] = bernoulli ? double(uniform01(rng) < mean) : mean + 0.7 * normal(rng);
  }
  return x;
}

double naive_gaussian_ratio(const std::vector<double>& x, std::size_t s, double sigma) {
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < s; ++i) a += x[i];
  for (std::size_t i = s; i < x.size(); ++i) b += x[i];
  const double n = double(x.size());
  const double diff = a / double(s) - b / (n - double(s));
  return double(s) * (n - double(s)) * diff * diff / (2.0 * n * sigma * sigma);
}

double naive_bernoulli_ratio(const std::vector<double>& x, std::size_t s) {
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < s; ++i) a += x[i];
  for (std::size_t i = s; i < x.size(); ++i) b += x[i];
  const double n = double(x.size());
  const double q = std::clamp((a + b) / n, 1e-9, 1 - 1e-9);
  if ((a + b) == 0.0 || (a + b) == n) return 0.0;
  return double(s) * oracle::kl(a / double(s), q) + (n - double(s)) * oracle::kl(b / (n - double(s)), q);
}

}  // namespace

TEST_CASE("beta threshold") {
  CHECK(beta_threshold(10, 0.01, ThresholdMode::Theoretical) == doctest::Approx(41.7815886064074).epsilon(1e-12));
  CHECK(beta_threshold(10, 0.01, ThresholdMode::Practical) == doctest::Approx(9.445342186599051).epsilon(1e-12));
  for (auto mode : {ThresholdMode::Theoretical, ThresholdMode::Practical}) {
    for (std::int64_t n = 1; n < 2000; n += 7) {
      for (double d : {0.5, 0.01, 1e-4}) {
        CHECK(beta_threshold(n + 1, d, mode) > beta_threshold(n, d, mode));
        CHECK(beta_threshold(n, d / 2, mode) > beta_threshold(n, d, mode));
      }
    }
  }
  CHECK_THROWS_AS(beta_threshold(0, 0.01, ThresholdMode::Practical), std::invalid_argument);
}

TEST_CASE("gaussian glr example") {
  const std::vector<double> x{0, 0, 0, 1, 1, 1};
  const auto p = oracle::prefix_sums(x);
  const double sigma = 0.5;
  CHECK(glr_statistic(p, Likelihood::Gaussian, sigma) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(split_log_ratio(p, 3, Likelihood::Gaussian, sigma) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(std::abs(oracle::glr(x, false, sigma) - 3.0) < 1e-9);
}

TEST_CASE("glr statistics match the likelihood-maximization oracle") {
  Rng rng(101);
  for (int i = 0; i < 300; ++i) {
    const bool bern = i % 2 == 0;
    const auto n = 2 + static_cast<std::size_t>(uniform01(rng) * 29);
    const auto x = random_sequence(rng, bern, n);
    const auto p = oracle::prefix_sums(x);
    const double sigma = 0.3 + uniform01(rng);
    const auto lik = bern ? Likelihood::BernoulliKl : Likelihood::Gaussian;
    for (std::int64_t stride : {1, 2, 5}) {
      const double fast = glr_statistic(p, lik, sigma, stride);
      CHECK(std::abs(fast - oracle::glr(x, bern, sigma, std::size_t(stride))) < 1e-9);
      CHECK(fast >= 0.0);
    }
  }
}

TEST_CASE("split ratios match naive recomputation from the raw buffer") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const bool bern = i % 2 == 1;
    const auto n = 2 + static_cast<std::size_t>(uniform01(rng) * 300);
    const auto x = random_sequence(rng, bern, n);
    const auto p = oracle::prefix_sums(x);
    for (std::size_t s = 1; s < n; ++s) {
      const double fast = split_log_ratio(p, std::int64_t(s), bern ? Likelihood::BernoulliKl : Likelihood::Gaussian, 0.5);
      const double slow = bern ? naive_bernoulli_ratio(x, s) : naive_gaussian_ratio(x, s, 0.5);
      CHECK(fast == doctest::Approx(slow).epsilon(1e-9).scale(1.0));
    }
  }
}

TEST_CASE("statistics of constant sequences vanish") {
  for (double v : {0.0, 1.0, 0.4}) {
    const std::vector<double> x(50, v);
    const auto p = oracle::prefix_sums(x);
    for (auto lik : {Likelihood::Gaussian, Likelihood::BernoulliKl}) {
      CHECK(std::abs(glr_statistic(p, lik, 0.5)) < 1e-12);
      CHECK(std::abs(gsr_log_statistic(p, lik, 0.5)) < 1e-12);
    }
  }
  CHECK(glr_statistic(std::vector<double>{0.0, 1.0}, Likelihood::Gaussian, 0.5) == 0.0);
}

TEST_CASE("gaussian statistics: shift and scale invariance") {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    auto x = random_sequence(rng, false, 40);
    const double c = 10.0 * (uniform01(rng) - 0.5);
    const double k = 0.2 + 3.0 * uniform01(rng);
    std::vector<double> shifted = x, scaled = x;
    for (auto& v : shifted) v += c;
    for (auto& v : scaled) v *= k;
    const double g = glr_statistic(oracle::prefix_sums(x), Likelihood::Gaussian, 0.5);
    CHECK(glr_statistic(oracle::prefix_sums(shifted), Likelihood::Gaussian, 0.5) == doctest::Approx(g).epsilon(1e-9));
    CHECK(glr_statistic(oracle::prefix_sums(scaled), Likelihood::Gaussian, 0.5 * k) == doctest::Approx(g).epsilon(1e-9));
    const double w = gsr_log_statistic(oracle::prefix_sums(x), Likelihood::Gaussian, 0.5);
    CHECK(gsr_log_statistic(oracle::prefix_sums(shifted), Likelihood::Gaussian, 0.5) == doctest::Approx(w).epsilon(1e-9));
  }
}

TEST_CASE("gsr example and sandwich") {
  const std::vector<double> x{0.0, 1.0};
  const double expected = std::log((std::exp(0.5) + 1.0) / 2.0);
  CHECK(expected == doctest::Approx(0.2809298036201614).epsilon(1e-14));
  CHECK(gsr_log_statistic(oracle::prefix_sums(x), Likelihood::Gaussian, std::sqrt(0.5)) ==
        doctest::Approx(expected).epsilon(1e-14));

  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    const bool bern = i % 2 == 0;
    const auto n = 1 + static_cast<std::size_t>(uniform01(rng) * 200);
    const auto x = random_sequence(rng, bern, n);
    const auto p = oracle::prefix_sums(x);
    const auto lik = bern ? Likelihood::BernoulliKl : Likelihood::Gaussian;
    const double g = glr_statistic(p, lik, 0.5);
    const double w = gsr_log_statistic(p, lik, 0.5);
    CHECK(w <= g + 1e-12);
    CHECK(w >= g - std::log(double(n)) - 1e-12);
  }
}

TEST_CASE("push_and_test stride contract") {
  DetectorConfig cfg;
  cfg.likelihood = Likelihood::BernoulliKl;
  cfg.test_stride = 10;
  cfg.delta_f = 0.01;
  DetectorState s;
  Rng rng(4);
  std::int64_t alarm_n = 0;
  for (int i = 1; i <= 2000 && !alarm_n; ++i) {
    const bool alarm = push_and_test(s, cfg, double(uniform01(rng) < (i <= 300 ? 0.1 : 0.9)));
    if (s.last) CHECK(s.samples() % 10 == 0);
    else CHECK(s.samples() % 10 != 0);
    if (alarm) alarm_n = s.samples();
  }
  REQUIRE(alarm_n > 0);
  CHECK(alarm_n % 10 == 0);
  CHECK(push_and_test(s, cfg, 0.0));
  CHECK(s.alarmed);
  reset(s);
  CHECK(s == DetectorState{});
  DetectorState twice = s;
  reset(twice);
  CHECK(twice == s);
  CHECK_FALSE(s.alarmed);
}

TEST_CASE("identical samples never alarm") {
  for (auto kind : {DetectorKind::Glr, DetectorKind::Gsr}) {
    for (auto lik : {Likelihood::Gaussian, Likelihood::BernoulliKl}) {
      for (auto mode : {ThresholdMode::Practical, ThresholdMode::Theoretical}) {
        for (double v : {0.0, 1.0, 0.25}) {
          DetectorConfig cfg{kind, lik, 0.5, mode, 0.5, 1, 1};
          StatisticDetector d(cfg);
          bool alarm = false;
          for (int i = 0; i < 400; ++i) alarm = alarm || d.push(v);
          CHECK_FALSE(alarm);
        }
      }
    }
  }
}

TEST_CASE("gsr threshold carries the log n offset") {
  DetectorConfig cfg{DetectorKind::Gsr, Likelihood::Gaussian, 0.5, ThresholdMode::Practical, 0.01, 1, 1};
  DetectorState s;
  push_and_test(s, cfg, 0.0);
  push_and_test(s, cfg, 1.0);
  REQUIRE(s.last);
  CHECK(s.last->threshold == doctest::Approx(beta_threshold(2, 0.01, ThresholdMode::Practical) + std::log(2.0)));
}

TEST_CASE("detector config validation and labels") {
  DetectorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.test_stride = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.delta_f = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.likelihood = Likelihood::Gaussian;
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  for (const char* label : {"B-GLR", "G-GLR", "B-GSR", "G-GSR"})
    CHECK(detector_label(parse_detector_label(label)) == label);
  CHECK_THROWS_AS(parse_detector_label("CUSUM"), ConfigError);
  CHECK(parse_threshold_mode("theoretical") == ThresholdMode::Theoretical);
  CHECK_THROWS_AS(parse_threshold_mode("loose"), ConfigError);
}

TEST_CASE("bernoulli detection within 300 samples of a 0.5 -> 0.9 change") {
  const std::int64_t T = 5000, nu = 500;
  DetectorConfig cfg;
  cfg.likelihood = Likelihood::BernoulliKl;
  cfg.delta_f = 1.0 / std::sqrt(double(T));
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(derive_seed(77, {seed}));
    DetectorState s;
    for (std::int64_t i = 1; i < nu + 300; ++i) {
      if (push_and_test(s, cfg, double(uniform01(rng) < (i < nu ? 0.5 : 0.9)))) {
        hits += i >= nu;
        break;
      }
    }
  }
  CHECK(hits >= 950);
}

TEST_CASE("latency profile") {
  DetectorConfig cfg;
  cfg.likelihood = Likelihood::BernoulliKl;
  cfg.delta_f = 0.01;
  cfg.test_stride = 5;

  const auto vacuous = measure_latency_profile(cfg, 0.3, 800, 100, 1.0, 20);
  REQUIRE(vacuous.latency);
  CHECK(*vacuous.latency == 0);

  const auto small = measure_latency_profile(cfg, 0.2, 1500, 200, 0.1, 100);
  const auto large = measure_latency_profile(cfg, 0.4, 1500, 200, 0.1, 100);
  REQUIRE(small.latency);
  REQUIRE(large.latency);
  CHECK(*large.latency < *small.latency);
  CHECK(large.mean_delay < small.mean_delay);
  CHECK(small.placements.size() == 4);
  CHECK(small.placements.front() == 201);

  const auto warn = measure_latency_profile(cfg, 0.4, 500, 100, 0.01, 20);
  CHECK(warn.resolution_warning);
  CHECK_THROWS_AS(measure_latency_profile(cfg, 0.4, 500, 500, 0.1, 10), std::invalid_argument);
}

TEST_CASE("latency grows with the horizon at most logarithmically") {
  DetectorConfig cfg;
  cfg.likelihood = Likelihood::BernoulliKl;
  cfg.threshold = ThresholdMode::Practical;
  cfg.test_stride = 5;
  cfg.split_stride = 5;
  const double gap = 0.3;
  cfg.delta_f = 0.01;
  const auto short_run = measure_latency_profile(cfg, gap, 1000, 200, 0.1, 100);
  const auto long_run = measure_latency_profile(cfg, gap, 10000, 200, 0.1, 100);
  REQUIRE(short_run.latency);
  REQUIRE(long_run.latency);
  CHECK(*long_run.latency >= *short_run.latency);
  // Only beta grows with M: its increase over the information 2 gap^2
  // bounds the extra samples, with room for the 5-sample test stride.
  const double slack = 1.5 * std::log(10.0) / (2.0 * gap * gap) + 30.0;
  CHECK(double(*long_run.latency - *short_run.latency) <= slack);
}

TEST_CASE("latency model") {
  LatencyModel m{1.0, 2.0, 0.5, 0.01, 0.01};
  const double info = std::log(4.0 * std::pow(1000.0, 1.5) / 0.01) + std::log(100.0);
  CHECK(m.latency(0.2, 1000) == std::ceil(0.25 / 0.04 * info));
  CHECK(m.pre_window(0.2, 1000) == 2.0 * m.latency(0.2, 1000));
  CHECK(m.latency(0.4, 1000) < m.latency(0.2, 1000));
  CHECK(m.latency(0.2, 100000) > m.latency(0.2, 1000));
}
