#include <doctest.h>

#include <cmath>

#include "crl/multipliers.hpp"
#include "crl/rng.hpp"

using namespace crl;

namespace {

std::vector<ConstraintSpec> upper_specs(const Vec& thresholds) {
  std::vector<ConstraintSpec> specs;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    specs.push_back(ConstraintSpec{"c" + std::to_string(k), Bound::Upper, thresholds[k]});
  }
  return specs;
}

// High-precision softmax over (0, z...) evaluated independently.
std::pair<long double, std::vector<long double>> softmax_ref(const Vec& z) {
  long double denom = std::exp(0.0L);
  std::vector<long double> e;
  for (double v : z) {
    e.push_back(std::exp(static_cast<long double>(v)));
    denom += e.back();
  }
  for (auto& v : e) v /= denom;
  return {1.0L / denom, e};
}

}  // namespace

TEST_SUITE("multipliers") {

TEST_CASE("cost_rate counts flags") {
  std::vector<EventVector> batch = {{1}, {0}, {0}, {1}};
  CHECK(cost_rate(batch, 0) == doctest::Approx(0.5));
}

TEST_CASE("cost_rate of an all-zero batch is zero") {
  std::vector<EventVector> batch(16, EventVector{0, 0});
  CHECK(cost_rate(batch, 0) == 0.0);
  CHECK(cost_rate(batch, 1) == 0.0);
}

TEST_CASE("21 events in a batch of 2000 violate the 0.01 lava threshold") {
  std::vector<EventVector> batch(2000, EventVector{0});
  for (int i = 0; i < 21; ++i) batch[i][0] = 1;
  const double rate = cost_rate(batch, 0);
  CHECK(rate == doctest::Approx(0.0105));
  CHECK(rate > 0.01);
}

TEST_CASE("cost_rate rejects empty batches and bad indices") {
  std::vector<EventVector> empty;
  CHECK_THROWS_AS(cost_rate(empty, 0), std::invalid_argument);
  std::vector<EventVector> batch = {{1, 0}};
  CHECK_THROWS_AS(cost_rate(batch, 2), std::invalid_argument);
}

TEST_CASE("cost_rate equals the exact count ratio on random batches") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + static_cast<int>(rand_index(rng, 50));
    std::vector<EventVector> batch(n, EventVector{0});
    long count = 0;
    for (auto& e : batch) {
      e[0] = rand_uniform(rng) < 0.3 ? 1 : 0;
      count += e[0];
    }
    CHECK(cost_rate(batch, 0) == static_cast<double>(count) / n);
  }
}

TEST_CASE("two equal logits at zero give uniform thirds") {
  MultiplierState s = make_multiplier_state(2, 0.0, 0.03);
  const Multipliers m = normalized_multipliers(s);
  CHECK(m.lambda0 == doctest::Approx(1.0 / 3));
  CHECK(m.lambda[0] == doctest::Approx(1.0 / 3));
  CHECK(m.lambda[1] == doctest::Approx(1.0 / 3));
}

TEST_CASE("all logits to minus infinity concentrate weight on lambda0") {
  MultiplierState s = make_multiplier_state(3, -200.0, 0.03);
  const Multipliers m = normalized_multipliers(s);
  CHECK(m.lambda0 == doctest::Approx(1.0));
  for (double l : m.lambda) CHECK(l <= 1e-80);
}

TEST_CASE("paper-initialized logits match a high-precision softmax") {
  MultiplierState s = make_multiplier_state(2, 0.02, 0.03);
  const Multipliers m = normalized_multipliers(s);
  const auto [l0, lk] = softmax_ref(s.z);
  CHECK(m.lambda0 == doctest::Approx(static_cast<double>(l0)).epsilon(1e-15));
  CHECK(m.lambda[0] == doctest::Approx(static_cast<double>(lk[0])).epsilon(1e-15));
  CHECK(m.lambda[1] == doctest::Approx(static_cast<double>(lk[1])).epsilon(1e-15));
}

TEST_CASE("softmax stays stable under extreme logits") {
  MultiplierState s = make_multiplier_state(2, 0.0, 0.03);
  s.z = {500.0, -500.0};
  const Multipliers m = normalized_multipliers(s);
  CHECK(std::isfinite(m.lambda0));
  CHECK(m.lambda[0] == doctest::Approx(1.0));
  CHECK(m.lambda0 + m.lambda[0] + m.lambda[1] == doctest::Approx(1.0));
}

TEST_CASE("bootstrap weight is the max of the two coefficients") {
  CHECK(bootstrap_weight(0.1, 0.6) == doctest::Approx(0.6));
  CHECK(bootstrap_weight(0.5, 0.2) == doctest::Approx(0.5));
  CHECK(bootstrap_weight(0.33, 0.33) == doctest::Approx(0.33));
}

TEST_CASE("violated upper bound raises its multiplier") {
  MultiplierState s = make_multiplier_state(1, 0.02, 0.03);
  const double before = normalized_multipliers(s).lambda[0];
  RateEstimate rates{{0.2}, 100};
  multiplier_update(s, rates, upper_specs({0.01}));
  CHECK(normalized_multipliers(s).lambda[0] > before);
}

TEST_CASE("violated success lower bound raises the success multiplier") {
  MultiplierState s = make_multiplier_state(1, 0.02, 0.03);
  const double before = normalized_multipliers(s).lambda[0];
  RateEstimate rates{{0.5}, 100};
  std::vector<ConstraintSpec> specs = {{"success", Bound::Lower, 0.99}};
  multiplier_update(s, rates, specs);
  CHECK(normalized_multipliers(s).lambda[0] > before);
}

TEST_CASE("single binding constraint: violated up, slack-at-equilibrium down") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rand_index(rng, 4));
    MultiplierState s = make_multiplier_state(n, 0.0, 0.03);
    for (double& z : s.z) z = rand_range(rng, -2, 2);
    const int violated = static_cast<int>(rand_index(rng, n));
    Vec thresholds(n), rates(n);
    for (int k = 0; k < n; ++k) {
      // all satisfied exactly at threshold except one genuine violation
      thresholds[k] = 0.5;
      rates[k] = 0.5;
    }
    rates[violated] = 0.9;
    const Multipliers before = normalized_multipliers(s);
    multiplier_update(s, RateEstimate{rates, 100}, upper_specs(thresholds));
    const Multipliers after = normalized_multipliers(s);
    CHECK(after.lambda[violated] > before.lambda[violated]);
    for (int k = 0; k < n; ++k) {
      if (k != violated) CHECK(after.lambda[k] < before.lambda[k]);
    }
  }
}

TEST_CASE("uniform strict slack lowers every multiplier and raises lambda0") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rand_index(rng, 5));
    MultiplierState s = make_multiplier_state(n, 0.0, 0.03);
    for (double& z : s.z) z = rand_range(rng, -2, 2);
    const double slack = rand_range(rng, 0.05, 0.5);
    Vec thresholds(n), rates(n);
    for (int k = 0; k < n; ++k) {
      thresholds[k] = 0.5 + slack;
      rates[k] = 0.5;
    }
    const Multipliers before = normalized_multipliers(s);
    multiplier_update(s, RateEstimate{rates, 100}, upper_specs(thresholds));
    const Multipliers after = normalized_multipliers(s);
    CHECK(after.lambda0 >= before.lambda0);
    for (int k = 0; k < n; ++k) CHECK(after.lambda[k] <= before.lambda[k]);
  }
}

TEST_CASE("softmax-loss gradient matches finite differences") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rand_index(rng, 5));
    Vec z(n), c(n);
    for (double& v : z) v = rand_range(rng, -3, 3);
    for (double& v : c) v = rand_range(rng, -1, 1);

    auto loss = [&](const Vec& zz) {
      MultiplierState s = make_multiplier_state(n, 0.0, 0.03);
      s.z = zz;
      const Multipliers m = normalized_multipliers(s);
      double acc = 0;
      for (int k = 0; k < n; ++k) acc += c[k] * m.lambda[k];
      return acc;
    };
    // analytic gradient, as used inside multiplier_update
    MultiplierState s = make_multiplier_state(n, 0.0, 0.03);
    s.z = z;
    const Multipliers m = normalized_multipliers(s);
    double mix = 0;
    for (int k = 0; k < n; ++k) mix += c[k] * m.lambda[k];
    for (int i = 0; i < n; ++i) {
      const double analytic = m.lambda[i] * (c[i] - mix);
      Vec zp = z, zm = z;
      zp[i] += 1e-6;
      zm[i] -= 1e-6;
      const double fd = (loss(zp) - loss(zm)) / 2e-6;
      CHECK(std::abs(analytic - fd) <=
            1e-4 * std::max({std::abs(analytic), std::abs(fd), 1e-5}));
    }
  }
}

TEST_CASE("simplex invariant survives long random update sequences") {
  std::mt19937_64 rng(14);
  MultiplierState s = make_multiplier_state(4, 0.02, 0.03);
  auto specs = upper_specs({0.1, 0.2, 0.3, 0.4});
  for (int step = 0; step < 2000; ++step) {
    Vec rates(4);
    for (double& r : rates) r = rand_uniform(rng);
    multiplier_update(s, RateEstimate{rates, 50}, specs);
    const Multipliers m = normalized_multipliers(s);
    double sum = m.lambda0;
    CHECK(m.lambda0 >= 0.0);
    CHECK(m.lambda0 <= 1.0);
    for (double l : m.lambda) {
      CHECK(l >= 0.0);
      CHECK(l <= 1.0);
      sum += l;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("unnormalized mode follows the clipped additive rule") {
  MultiplierState s = make_multiplier_state(1, 0.0, 0.5, MultiplierMode::Unnormalized);
  auto specs = upper_specs({0.1});
  // violated: raw grows by lr * (rate - threshold)
  multiplier_update(s, RateEstimate{{0.6}, 10}, specs);
  CHECK(s.raw[0] == doctest::Approx(0.25));
  // satisfied: shrinks, clipped at zero eventually
  multiplier_update(s, RateEstimate{{0.0}, 10}, specs);
  CHECK(s.raw[0] == doctest::Approx(0.2));
  for (int i = 0; i < 10; ++i) multiplier_update(s, RateEstimate{{0.0}, 10}, specs);
  CHECK(s.raw[0] == 0.0);
  const Multipliers m = normalized_multipliers(s);
  CHECK(m.lambda0 == 1.0);
}

TEST_CASE("estimate_rates reads the leading event slots of a batch") {
  Batch batch;
  for (int i = 0; i < 4; ++i) {
    Transition t;
    t.state = {0.0};
    t.action = {0.0};
    t.next_state = {0.0};
    t.events = {static_cast<std::uint8_t>(i % 2), 1, 0};
    batch.push_back(t);
  }
  const RateEstimate est = estimate_rates(batch, 2);
  CHECK(est.rates[0] == doctest::Approx(0.5));
  CHECK(est.rates[1] == doctest::Approx(1.0));
  CHECK(est.batch_size == 4);
}

TEST_CASE("misaligned spec and rate lengths are rejected") {
  MultiplierState s = make_multiplier_state(2, 0.02, 0.03);
  CHECK_THROWS_AS(multiplier_update(s, RateEstimate{{0.1}, 10}, upper_specs({0.1, 0.2})),
                  std::invalid_argument);
}

}  // TEST_SUITE
