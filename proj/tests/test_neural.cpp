#include <doctest.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "crl/neural.hpp"
#include "crl/rng.hpp"

using namespace crl;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-5});
}

// Straight-line re-evaluation of the documented parameter layout, written
// independently of the production forward pass.
Vec reference_forward(const Mlp& m, const Vec& input) {
  Vec x = input;
  for (int l = 0; l < m.spec.n_layers(); ++l) {
    const LayerView lv = layer_view(m.spec, l);
    const int in = m.spec.sizes[l], out = m.spec.sizes[l + 1];
    Vec z(out, 0.0);
    for (int o = 0; o < out; ++o) {
      double acc = m.params[lv.b + o];
      for (int i = 0; i < in; ++i) acc += m.params[lv.w + o * in + i] * x[i];
      z[o] = acc;
    }
    if (l == 0 && m.spec.layer_norm_first) {
      double mean = 0, var = 0;
      for (double v : z) mean += v;
      mean /= out;
      for (double v : z) var += (v - mean) * (v - mean);
      var /= out;
      for (int o = 0; o < out; ++o) {
        const double xhat = (z[o] - mean) / std::sqrt(var + 1e-5);
        z[o] = m.params[lv.ln_gain + o] * xhat + m.params[lv.ln_bias + o];
      }
    }
    for (int o = 0; o < out; ++o) {
      switch (m.spec.acts[l]) {
        case Act::Relu: z[o] = std::max(0.0, z[o]); break;
        case Act::Tanh: z[o] = std::tanh(z[o]); break;
        default: break;
      }
    }
    x = z;
  }
  return x;
}

// Central finite difference of a scalar function of the parameter vector.
double fd_grad(const std::function<double(const Vec&)>& f, Vec params, std::size_t i, double h) {
  const double orig = params[i];
  params[i] = orig + h;
  const double plus = f(params);
  params[i] = orig - h;
  const double minus = f(params);
  return (plus - minus) / (2.0 * h);
}

double max_rel_grad_err(const std::function<double(const Vec&)>& f, const Vec& params,
                        const Vec& analytic, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    worst = std::max(worst, rel_err(analytic[i], fd_grad(f, params, i, h)));
  }
  return worst;
}

}  // namespace

TEST_SUITE("neural") {

TEST_CASE("identity single layer passes input through") {
  MlpSpec spec{{3, 3}, {Act::Identity}, false};
  std::mt19937_64 rng(1);
  Mlp m = make_mlp(spec, rng);
  const LayerView lv = layer_view(spec, 0);
  std::fill(m.params.begin(), m.params.end(), 0.0);
  for (int i = 0; i < 3; ++i) m.params[lv.w + i * 3 + i] = 1.0;
  const Vec out = mlp_forward(m, Vec{0.3, -0.7, 2.0});
  CHECK(out[0] == doctest::Approx(0.3));
  CHECK(out[1] == doctest::Approx(-0.7));
  CHECK(out[2] == doctest::Approx(2.0));
}

TEST_CASE("zero weights yield activation of the bias") {
  MlpSpec spec{{2, 2}, {Act::Tanh}, false};
  std::mt19937_64 rng(2);
  Mlp m = make_mlp(spec, rng);
  const LayerView lv = layer_view(spec, 0);
  std::fill(m.params.begin(), m.params.end(), 0.0);
  m.params[lv.b + 0] = 0.5;
  m.params[lv.b + 1] = -1.25;
  const Vec out = mlp_forward(m, Vec{9.0, -3.0});
  CHECK(out[0] == doctest::Approx(std::tanh(0.5)));
  CHECK(out[1] == doctest::Approx(std::tanh(-1.25)));
}

TEST_CASE("forward matches an independent re-implementation") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    MlpSpec spec{{4, 8, 2}, {Act::Tanh, Act::Identity}, trial % 2 == 0};
    Mlp m = make_mlp(spec, rng);
    Vec x(4);
    for (double& v : x) v = rand_range(rng, -2, 2);
    const Vec got = mlp_forward(m, x);
    const Vec want = reference_forward(m, x);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
  }
}

TEST_CASE("non-finite input is rejected") {
  MlpSpec spec{{2, 2}, {Act::Identity}, false};
  std::mt19937_64 rng(4);
  Mlp m = make_mlp(spec, rng);
  CHECK_THROWS_AS(mlp_forward(m, Vec{1.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("linear layer gradient is the outer product") {
  MlpSpec spec{{3, 2}, {Act::Identity}, false};
  std::mt19937_64 rng(5);
  Mlp m = make_mlp(spec, rng);
  const Vec x{0.5, -1.0, 2.0};
  const Vec v{0.7, -0.2};  // loss = output . v
  MlpCache cache;
  Mat xin(1, 3);
  xin.a = x;
  mlp_forward(m, xin, cache);
  Mat dy(1, 2);
  dy.a = v;
  MlpGrads g;
  mlp_backward(m, cache, dy, g);
  const LayerView lv = layer_view(spec, 0);
  for (int o = 0; o < 2; ++o) {
    for (int i = 0; i < 3; ++i) {
      CHECK(g.params[lv.w + o * 3 + i] == doctest::Approx(v[o] * x[i]));
    }
    CHECK(g.params[lv.b + o] == doctest::Approx(v[o]));
  }
}

TEST_CASE("zero output gradient zeroes every parameter gradient") {
  MlpSpec spec{{3, 5, 2}, {Act::Tanh, Act::Identity}, true};
  std::mt19937_64 rng(6);
  Mlp m = make_mlp(spec, rng);
  MlpCache cache;
  Mat x(1, 3);
  x.a = {0.1, 0.2, 0.3};
  mlp_forward(m, x, cache);
  MlpGrads g;
  mlp_backward(m, cache, Mat(1, 2), g);
  for (double v : g.params) CHECK(v == 0.0);
}

TEST_CASE("backward matches finite differences, with and without layer norm") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    MlpSpec spec{{4, 6, 5, 2},
                 {trial % 2 ? Act::Tanh : Act::Relu, Act::Tanh, Act::Identity},
                 trial % 3 != 0};
    Mlp m = make_mlp(spec, rng);
    Mat x(2, 4);
    for (double& v : x.a) v = rand_range(rng, -1.5, 1.5);
    Mat dy(2, 2);
    for (double& v : dy.a) v = rand_range(rng, -1, 1);

    MlpCache cache;
    mlp_forward(m, x, cache);
    MlpGrads g;
    mlp_backward(m, cache, dy, g, true, true);

    auto objective = [&](const Vec& params) {
      Mlp probe = m;
      probe.params = params;
      MlpCache c;
      mlp_forward(probe, x, c);
      double acc = 0;
      for (std::size_t i = 0; i < c.output().a.size(); ++i) acc += c.output().a[i] * dy.a[i];
      return acc;
    };
    CHECK(max_rel_grad_err(objective, m.params, g.params) <= 1e-4);

    // input gradient against finite differences as well
    for (int i = 0; i < x.rows * x.cols; ++i) {
      Mat xp = x, xm = x;
      xp.a[i] += 1e-5;
      xm.a[i] -= 1e-5;
      MlpCache cp, cm;
      mlp_forward(m, xp, cp);
      mlp_forward(m, xm, cm);
      double plus = 0, minus = 0;
      for (std::size_t j = 0; j < dy.a.size(); ++j) {
        plus += cp.output().a[j] * dy.a[j];
        minus += cm.output().a[j] * dy.a[j];
      }
      CHECK(rel_err(g.input.a[i], (plus - minus) / 2e-5) <= 1e-4);
    }
  }
}

TEST_CASE("cache and parameter shape mismatches are rejected") {
  MlpSpec spec{{3, 2}, {Act::Identity}, false};
  std::mt19937_64 rng(8);
  Mlp m = make_mlp(spec, rng);
  MlpCache cache;
  Mat x(1, 3);
  mlp_forward(m, x, cache);
  MlpGrads g;
  CHECK_THROWS_AS(mlp_backward(m, cache, Mat(1, 3), g), std::invalid_argument);
}

TEST_CASE("adam first step moves by about lr in the gradient sign") {
  Vec params{1.0, -2.0};
  AdamState opt = make_adam(2, 0.001);
  adam_step(params, Vec{0.5, -3.0}, opt);
  CHECK(params[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-4));
  CHECK(params[1] == doctest::Approx(-2.0 + 0.001).epsilon(1e-4));
}

TEST_CASE("adam leaves parameters alone on zero gradient at zero moments") {
  Vec params{0.25, -0.75};
  AdamState opt = make_adam(2, 0.1);
  adam_step(params, Vec{0.0, 0.0}, opt);
  CHECK(params[0] == doctest::Approx(0.25));
  CHECK(params[1] == doctest::Approx(-0.75));
}

TEST_CASE("adam rejects non-finite gradients") {
  Vec params{0.0};
  AdamState opt = make_adam(1, 0.1);
  CHECK_THROWS_AS(adam_step(params, Vec{std::nan("")}, opt), std::runtime_error);
}

TEST_CASE("soft update endpoints and geometric decay") {
  Vec target{0.0}, online{1.0};
  Vec t1 = target;
  soft_update(t1, online, 1.0);
  CHECK(t1[0] == doctest::Approx(1.0));
  Vec t0 = target;
  soft_update(t0, online, 0.0);
  CHECK(t0[0] == doctest::Approx(0.0));
  Vec t = target;
  for (int i = 0; i < 200; ++i) soft_update(t, online, 0.005);
  CHECK(t[0] == doctest::Approx(1.0 - std::pow(0.995, 200)).epsilon(1e-12));
}

TEST_CASE("near-zero sigma collapses the action onto tanh of the mean") {
  std::mt19937_64 rng(9);
  GaussianPolicy p = make_policy(3, 2, 8, rng);
  p.log_std_min = -20.0;
  p.log_std_max = -20.0 + 1e-12;  // pin sigma at the clamp floor
  const Vec obs{0.2, -0.4, 0.9};
  Mat o(1, 3);
  o.a = obs;
  PolicyCache c;
  policy_forward(p, o, c);
  const auto [action, logp] = policy_sample(p, obs, rng);
  for (int d = 0; d < 2; ++d) {
    CHECK(action[d] == doctest::Approx(std::tanh(c.mean(0, d))).epsilon(1e-8));
  }
}

TEST_CASE("one-dimensional density integrates to one") {
  std::mt19937_64 rng(10);
  GaussianPolicy p = make_policy(2, 1, 6, rng);
  const Vec obs{0.5, -0.3};
  Mat o(1, 2);
  o.a = obs;
  PolicyCache c;
  policy_forward(p, o, c);
  const double mu = c.mean(0, 0);
  const double sigma = std::exp(c.log_std(0, 0));

  // Independent density via atanh: p(a) = N(atanh a; mu, sigma) / (1 - a^2).
  auto density = [&](double a) {
    const double u = std::atanh(a);
    const double z = (u - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI)) / (1.0 - a * a);
  };
  const double lo = -1.0 + 1e-12, hi = 1.0 - 1e-12;
  const int n = 1 << 16;  // composite Simpson
  const double h = (hi - lo) / n;
  long double acc = density(lo) + density(hi);
  for (int i = 1; i < n; ++i) acc += density(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  const double integral = static_cast<double>(acc * h / 3.0);
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));

  // The sampled log_prob agrees with the independent formula at the sample.
  const auto [action, logp] = policy_sample(p, obs, rng);
  CHECK(logp == doctest::Approx(std::log(density(action[0]))).epsilon(1e-9));
}

TEST_CASE("log-prob gradient through the sample matches finite differences") {
  std::mt19937_64 rng(11);
  GaussianPolicy p = make_policy(3, 2, 5, rng);
  const Vec obs{0.4, -0.8, 0.1};
  Mat o(1, 3);
  o.a = obs;

  const std::uint64_t eps_seed = 4242;
  auto logp_of = [&](const Vec& params) {
    GaussianPolicy probe = p;
    probe.params = params;
    std::mt19937_64 r(eps_seed);
    PolicyCache c;
    policy_sample(probe, o, r, c);
    return c.log_prob[0];
  };

  std::mt19937_64 r(eps_seed);
  PolicyCache c;
  policy_sample(p, o, r, c);
  Vec grads(policy_param_count(p), 0.0);
  policy_backward(p, c, Vec{1.0}, Mat(), grads);
  CHECK(max_rel_grad_err(logp_of, p.params, grads) <= 1e-4);
}

TEST_CASE("action gradient through the sample matches finite differences") {
  std::mt19937_64 rng(12);
  GaussianPolicy p = make_policy(2, 2, 5, rng);
  const Vec obs{0.3, 0.6};
  Mat o(1, 2);
  o.a = obs;
  Mat dq(1, 2);
  dq(0, 0) = 0.8;
  dq(0, 1) = -1.3;

  const std::uint64_t eps_seed = 777;
  auto obj_of = [&](const Vec& params) {
    GaussianPolicy probe = p;
    probe.params = params;
    std::mt19937_64 r(eps_seed);
    PolicyCache c;
    policy_sample(probe, o, r, c);
    return dq(0, 0) * c.actions(0, 0) + dq(0, 1) * c.actions(0, 1);
  };

  std::mt19937_64 r(eps_seed);
  PolicyCache c;
  policy_sample(p, o, r, c);
  Vec grads(policy_param_count(p), 0.0);
  policy_backward(p, c, Vec{0.0}, dq, grads);
  CHECK(max_rel_grad_err(obj_of, p.params, grads) <= 1e-4);
}

TEST_CASE("checkpoints reload to identical bytes and behavior") {
  std::mt19937_64 rng(13);
  MlpSpec spec{{4, 6, 3}, {Act::Relu, Act::Identity}, true};
  Mlp m = make_mlp(spec, rng);
  std::stringstream buf;
  save_mlp(buf, m);
  const Mlp m2 = load_mlp(buf);
  CHECK(m2.params == m.params);
  Vec x{0.1, -0.2, 0.3, 0.4};
  CHECK(mlp_forward(m, x) == mlp_forward(m2, x));

  GaussianPolicy p = make_policy(4, 2, 6, rng);
  std::stringstream pbuf;
  save_policy(pbuf, p);
  const GaussianPolicy p2 = load_policy(pbuf);
  CHECK(p2.params == p.params);
  CHECK(policy_mean_action(p, x) == policy_mean_action(p2, x));

  std::stringstream bad("CRLXXX1\ngarbage");
  CHECK_THROWS_AS(load_mlp(bad), std::runtime_error);
}

}  // TEST_SUITE
