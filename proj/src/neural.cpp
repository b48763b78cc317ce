#include "crl/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "crl/rng.hpp"

namespace crl {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kLog2 = 0.69314718055994530941723212145818;

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(1 - tanh(u)^2) without catastrophic underflow at large |u|.
double log1m_tanh2(double u) { return 2.0 * (kLog2 - u - softplus(-2.0 * u)); }

double activate(Act a, double x) {
  switch (a) {
    case Act::Relu: return x > 0.0 ? x : 0.0;
    case Act::Tanh: return std::tanh(x);
    default: return x;
  }
}

// Derivative expressed through the activation output.
double activate_grad_from_out(Act a, double out) {
  switch (a) {
    case Act::Relu: return out > 0.0 ? 1.0 : 0.0;
    case Act::Tanh: return 1.0 - out * out;
    default: return 1.0;
  }
}

void check_spec(const MlpSpec& spec) {
  if (spec.sizes.size() < 2) throw std::invalid_argument("mlp needs at least one layer");
  if (spec.acts.size() + 1 != spec.sizes.size()) {
    throw std::invalid_argument("mlp spec needs one activation per layer");
  }
  for (int s : spec.sizes) {
    if (s <= 0) throw std::invalid_argument("mlp layer sizes must be positive");
  }
}

void affine_forward(const double* w, const double* b, const Mat& x, Mat& out) {
  const int in = x.cols, n = x.rows, o_dim = out.cols;
  for (int n_i = 0; n_i < n; ++n_i) {
    const double* xr = x.row(n_i);
    double* yr = out.row(n_i);
    for (int o = 0; o < o_dim; ++o) {
      const double* wr = w + static_cast<std::size_t>(o) * in;
      double acc = b[o];
      for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
}

void forward_impl(const MlpSpec& spec, const double* params, const Mat& input, MlpCache& cache) {
  check_spec(spec);
  if (input.cols != spec.input_dim()) throw std::invalid_argument("mlp input dimension mismatch");
  for (double v : input.a) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite mlp input");
  }
  const int n = input.rows;
  cache.input = input;
  cache.act_out.assign(spec.n_layers(), Mat());

  const Mat* x = &cache.input;
  for (int l = 0; l < spec.n_layers(); ++l) {
    LayerView lv = layer_view(spec, l);
    Mat& out = cache.act_out[l];
    out = Mat(n, spec.sizes[l + 1]);
    affine_forward(params + lv.w, params + lv.b, *x, out);

    if (l == 0 && spec.layer_norm_first) {
      const int h = out.cols;
      cache.ln_xhat = Mat(n, h);
      cache.ln_inv_std.assign(n, 0.0);
      const double* gain = params + lv.ln_gain;
      const double* bias = params + lv.ln_bias;
      for (int n_i = 0; n_i < n; ++n_i) {
        double* zr = out.row(n_i);
        double mean = 0.0;
        for (int j = 0; j < h; ++j) mean += zr[j];
        mean /= h;
        double var = 0.0;
        for (int j = 0; j < h; ++j) var += (zr[j] - mean) * (zr[j] - mean);
        var /= h;
        const double inv_std = 1.0 / std::sqrt(var + kLnEps);
        cache.ln_inv_std[n_i] = inv_std;
        double* xh = cache.ln_xhat.row(n_i);
        for (int j = 0; j < h; ++j) {
          xh[j] = (zr[j] - mean) * inv_std;
          zr[j] = gain[j] * xh[j] + bias[j];
        }
      }
    }
    double* data = out.a.data();
    const std::size_t sz = out.a.size();
    const Act act = spec.acts[l];
    if (act != Act::Identity) {
      for (std::size_t i = 0; i < sz; ++i) data[i] = activate(act, data[i]);
    }
    x = &out;
  }
}

void backward_impl(const MlpSpec& spec, const double* params, const MlpCache& cache,
                   const Mat& output_grad, double* param_grads, Mat* input_grad) {
  const int n = cache.input.rows;
  if (static_cast<int>(cache.act_out.size()) != spec.n_layers() ||
      cache.input.cols != spec.input_dim() || output_grad.rows != n ||
      output_grad.cols != spec.output_dim()) {
    throw std::invalid_argument("mlp backward: cache/parameter mismatch");
  }

  Mat d_cur = output_grad;
  for (int l = spec.n_layers() - 1; l >= 0; --l) {
    const Mat& a_out = cache.act_out[l];
    const int o_dim = spec.sizes[l + 1];
    const Act act = spec.acts[l];
    // through the activation
    if (act != Act::Identity) {
      for (int n_i = 0; n_i < n; ++n_i) {
        double* dr = d_cur.row(n_i);
        const double* ar = a_out.row(n_i);
        for (int o = 0; o < o_dim; ++o) dr[o] *= activate_grad_from_out(act, ar[o]);
      }
    }
    LayerView lv = layer_view(spec, l);
    if (l == 0 && spec.layer_norm_first) {
      const int h = o_dim;
      const double* gain = params + lv.ln_gain;
      for (int n_i = 0; n_i < n; ++n_i) {
        double* dy = d_cur.row(n_i);
        const double* xh = cache.ln_xhat.row(n_i);
        const double inv_std = cache.ln_inv_std[n_i];
        if (param_grads) {
          double* dg = param_grads + lv.ln_gain;
          double* db = param_grads + lv.ln_bias;
          for (int j = 0; j < h; ++j) {
            dg[j] += dy[j] * xh[j];
            db[j] += dy[j];
          }
        }
        // dy -> dz through the normalization
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int j = 0; j < h; ++j) {
          const double dxh = dy[j] * gain[j];
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xh[j];
        }
        for (int j = 0; j < h; ++j) {
          const double dxh = dy[j] * gain[j];
          dy[j] = inv_std / h * (h * dxh - sum_dxhat - xh[j] * sum_dxhat_xhat);
        }
      }
    }
    const Mat& x_in = (l == 0) ? cache.input : cache.act_out[l - 1];
    const int in = spec.sizes[l];
    if (param_grads) {
      double* dw = param_grads + lv.w;
      double* db = param_grads + lv.b;
      for (int n_i = 0; n_i < n; ++n_i) {
        const double* dr = d_cur.row(n_i);
        const double* xr = x_in.row(n_i);
        for (int o = 0; o < o_dim; ++o) {
          const double d = dr[o];
          if (d == 0.0) continue;
          double* dwr = dw + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) dwr[i] += d * xr[i];
          db[o] += d;
        }
      }
    }
    if (l > 0 || input_grad) {
      Mat d_prev(n, in);
      const double* w = params + lv.w;
      for (int n_i = 0; n_i < n; ++n_i) {
        const double* dr = d_cur.row(n_i);
        double* dp = d_prev.row(n_i);
        for (int o = 0; o < o_dim; ++o) {
          const double d = dr[o];
          if (d == 0.0) continue;
          const double* wr = w + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) dp[i] += d * wr[i];
        }
      }
      if (l == 0) {
        *input_grad = std::move(d_prev);
      } else {
        d_cur = std::move(d_prev);
      }
    }
  }
}

}  // namespace

std::size_t param_count(const MlpSpec& spec) {
  check_spec(spec);
  std::size_t total = 0;
  for (int l = 0; l < spec.n_layers(); ++l) {
    total += static_cast<std::size_t>(spec.sizes[l]) * spec.sizes[l + 1] + spec.sizes[l + 1];
    if (l == 0 && spec.layer_norm_first) total += 2 * static_cast<std::size_t>(spec.sizes[1]);
  }
  return total;
}

LayerView layer_view(const MlpSpec& spec, int layer) {
  LayerView lv;
  std::size_t off = 0;
  for (int l = 0; l <= layer; ++l) {
    lv.w = off;
    off += static_cast<std::size_t>(spec.sizes[l]) * spec.sizes[l + 1];
    lv.b = off;
    off += spec.sizes[l + 1];
    if (l == 0 && spec.layer_norm_first) {
      lv.ln_gain = off;
      off += spec.sizes[1];
      lv.ln_bias = off;
      off += spec.sizes[1];
    }
  }
  return lv;
}

Mlp make_mlp(MlpSpec spec, std::mt19937_64& rng) {
  check_spec(spec);
  Mlp m;
  m.spec = std::move(spec);
  m.params.assign(param_count(m.spec), 0.0);
  for (int l = 0; l < m.spec.n_layers(); ++l) {
    LayerView lv = layer_view(m.spec, l);
    const int in = m.spec.sizes[l], out = m.spec.sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < static_cast<std::size_t>(in) * out; ++i) {
      m.params[lv.w + i] = rand_range(rng, -bound, bound);
    }
    if (l == 0 && m.spec.layer_norm_first) {
      for (int j = 0; j < out; ++j) m.params[lv.ln_gain + j] = 1.0;
    }
  }
  return m;
}

void mlp_forward(const Mlp& m, const Mat& input, MlpCache& cache) {
  forward_impl(m.spec, m.params.data(), input, cache);
}

Vec mlp_forward(const Mlp& m, const Vec& input, MlpCache* cache) {
  Mat x(1, static_cast<int>(input.size()));
  x.a = input;
  MlpCache local;
  MlpCache& c = cache ? *cache : local;
  forward_impl(m.spec, m.params.data(), x, c);
  return c.output().a;
}

void mlp_backward(const Mlp& m, const MlpCache& cache, const Mat& output_grad, MlpGrads& grads,
                  bool want_param_grads, bool want_input_grad) {
  if (want_param_grads) grads.params.assign(m.params.size(), 0.0);
  backward_impl(m.spec, m.params.data(), cache, output_grad,
                want_param_grads ? grads.params.data() : nullptr,
                want_input_grad ? &grads.input : nullptr);
}

AdamState make_adam(std::size_t n, double lr) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(Vec& params, const Vec& grads, AdamState& opt) {
  if (params.size() != grads.size() || params.size() != opt.m.size()) {
    throw std::invalid_argument("adam: parameter/gradient/moment size mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw std::runtime_error("adam: non-finite gradient");
  }
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * grads[i];
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
    const double mhat = opt.m[i] / bc1;
    const double vhat = opt.v[i] / bc2;
    params[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
  }
}

void soft_update(Vec& target, const Vec& online, double tau) {
  if (target.size() != online.size()) throw std::invalid_argument("soft_update: size mismatch");
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("soft_update: tau outside [0,1]");
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i] = (1.0 - tau) * target[i] + tau * online[i];
  }
}

// ---------------------------------------------------------------------------

GaussianPolicy make_policy(int obs_dim, int action_dim, int hidden, std::mt19937_64& rng,
                           bool layer_norm) {
  GaussianPolicy p;
  p.trunk.sizes = {obs_dim, hidden, hidden};
  p.trunk.acts = {Act::Tanh, Act::Tanh};
  p.trunk.layer_norm_first = layer_norm;
  p.action_dim = action_dim;
  Mlp trunk = make_mlp(p.trunk, rng);
  const std::size_t head = static_cast<std::size_t>(action_dim) * hidden + action_dim;
  p.params = std::move(trunk.params);
  p.params.resize(p.params.size() + 2 * head, 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::size_t off = param_count(p.trunk);
  for (int half = 0; half < 2; ++half) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(action_dim) * hidden; ++i) {
      p.params[off + i] = rand_range(rng, -bound, bound);
    }
    off += head;
  }
  return p;
}

std::size_t policy_param_count(const GaussianPolicy& p) {
  const std::size_t head =
      static_cast<std::size_t>(p.action_dim) * p.trunk.output_dim() + p.action_dim;
  return param_count(p.trunk) + 2 * head;
}

void policy_forward(const GaussianPolicy& p, const Mat& obs, PolicyCache& cache) {
  forward_impl(p.trunk, p.params.data(), obs, cache.trunk);
  const int n = obs.rows, h = p.trunk.output_dim(), a_dim = p.action_dim;
  const std::size_t trunk_n = param_count(p.trunk);
  const double* w_mean = p.params.data() + trunk_n;
  const double* b_mean = w_mean + static_cast<std::size_t>(a_dim) * h;
  const double* w_std = b_mean + a_dim;
  const double* b_std = w_std + static_cast<std::size_t>(a_dim) * h;

  cache.mean = Mat(n, a_dim);
  cache.log_std_raw = Mat(n, a_dim);
  affine_forward(w_mean, b_mean, cache.trunk.output(), cache.mean);
  affine_forward(w_std, b_std, cache.trunk.output(), cache.log_std_raw);
  cache.log_std = cache.log_std_raw;
  for (double& v : cache.log_std.a) v = std::clamp(v, p.log_std_min, p.log_std_max);
}

void policy_sample(const GaussianPolicy& p, const Mat& obs, std::mt19937_64& rng,
                   PolicyCache& cache) {
  policy_forward(p, obs, cache);
  const int n = obs.rows, a_dim = p.action_dim;
  cache.eps = Mat(n, a_dim);
  cache.pre_squash = Mat(n, a_dim);
  cache.actions = Mat(n, a_dim);
  cache.log_prob.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double lp = 0.0;
    for (int d = 0; d < a_dim; ++d) {
      const double e = rand_gaussian(rng);
      const double sigma = std::exp(cache.log_std(i, d));
      const double u = cache.mean(i, d) + sigma * e;
      cache.eps(i, d) = e;
      cache.pre_squash(i, d) = u;
      cache.actions(i, d) = std::tanh(u);
      lp += -0.5 * e * e - cache.log_std(i, d) - 0.5 * kLog2Pi - log1m_tanh2(u);
    }
    cache.log_prob[i] = lp;
  }
}

std::pair<Vec, double> policy_sample(const GaussianPolicy& p, const Vec& obs,
                                     std::mt19937_64& rng) {
  Mat x(1, static_cast<int>(obs.size()));
  x.a = obs;
  PolicyCache c;
  policy_sample(p, x, rng, c);
  return {c.actions.a, c.log_prob[0]};
}

Vec policy_mean_action(const GaussianPolicy& p, const Vec& obs) {
  Mat x(1, static_cast<int>(obs.size()));
  x.a = obs;
  PolicyCache c;
  policy_forward(p, x, c);
  Vec out(c.mean.a);
  for (double& v : out) v = std::tanh(v);
  return out;
}

void policy_backward(const GaussianPolicy& p, const PolicyCache& cache, const Vec& logp_weight,
                     const Mat& dq_da, Vec& grads) {
  const int n = cache.trunk.input.rows, h = p.trunk.output_dim(), a_dim = p.action_dim;
  if (grads.size() != policy_param_count(p)) {
    throw std::invalid_argument("policy_backward: gradient buffer size mismatch");
  }
  if (static_cast<int>(logp_weight.size()) != n) {
    throw std::invalid_argument("policy_backward: logp_weight size mismatch");
  }
  const bool has_q = dq_da.rows == n && dq_da.cols == a_dim;

  Mat d_mean(n, a_dim), d_logstd(n, a_dim);
  for (int i = 0; i < n; ++i) {
    const double lw = logp_weight[i];
    for (int d = 0; d < a_dim; ++d) {
      const double a = cache.actions(i, d);
      const double sig_eps = std::exp(cache.log_std(i, d)) * cache.eps(i, d);
      const double dq = has_q ? dq_da(i, d) : 0.0;
      // dG/du through the squash plus the explicit -log_std density term.
      const double du = lw * 2.0 * a + dq * (1.0 - a * a);
      d_mean(i, d) = du;
      const double raw = cache.log_std_raw(i, d);
      const bool interior = raw > p.log_std_min && raw < p.log_std_max;
      d_logstd(i, d) = interior ? (du * sig_eps - lw) : 0.0;
    }
  }

  const std::size_t trunk_n = param_count(p.trunk);
  const std::size_t head_w = static_cast<std::size_t>(a_dim) * h;
  const double* w_mean = p.params.data() + trunk_n;
  const double* w_std = w_mean + head_w + a_dim;
  double* g_wmean = grads.data() + trunk_n;
  double* g_bmean = g_wmean + head_w;
  double* g_wstd = g_bmean + a_dim;
  double* g_bstd = g_wstd + head_w;

  const Mat& hidden = cache.trunk.output();
  Mat d_hidden(n, h);
  for (int i = 0; i < n; ++i) {
    const double* hr = hidden.row(i);
    double* dh = d_hidden.row(i);
    for (int d = 0; d < a_dim; ++d) {
      const double dm = d_mean(i, d), ds = d_logstd(i, d);
      const double* wmr = w_mean + static_cast<std::size_t>(d) * h;
      const double* wsr = w_std + static_cast<std::size_t>(d) * h;
      double* gwm = g_wmean + static_cast<std::size_t>(d) * h;
      double* gws = g_wstd + static_cast<std::size_t>(d) * h;
      for (int j = 0; j < h; ++j) {
        gwm[j] += dm * hr[j];
        gws[j] += ds * hr[j];
        dh[j] += dm * wmr[j] + ds * wsr[j];
      }
      g_bmean[d] += dm;
      g_bstd[d] += ds;
    }
  }
  backward_impl(p.trunk, p.params.data(), cache.trunk, d_hidden, grads.data(), nullptr);
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
  return v;
}

void write_magic(std::ostream& os, const char* magic) { os.write(magic, 8); }

void expect_magic(std::istream& is, const char* magic) {
  char buf[8];
  is.read(buf, 8);
  if (!is || std::memcmp(buf, magic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
}

void write_spec(std::ostream& os, const MlpSpec& spec, const Vec& params) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(spec.sizes.size()));
  for (int s : spec.sizes) write_pod<std::int32_t>(os, s);
  for (Act a : spec.acts) write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(a));
  write_pod<std::uint8_t>(os, spec.layer_norm_first ? 1 : 0);
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(params.size()));
  os.write(reinterpret_cast<const char*>(params.data()),
           static_cast<std::streamsize>(params.size() * sizeof(double)));
}

void read_spec(std::istream& is, MlpSpec& spec, Vec& params) {
  const auto n_sizes = read_pod<std::uint32_t>(is);
  spec.sizes.resize(n_sizes);
  for (auto& s : spec.sizes) s = read_pod<std::int32_t>(is);
  spec.acts.resize(n_sizes - 1);
  for (auto& a : spec.acts) a = static_cast<Act>(read_pod<std::uint8_t>(is));
  spec.layer_norm_first = read_pod<std::uint8_t>(is) != 0;
  const auto n_params = read_pod<std::uint64_t>(is);
  params.resize(n_params);
  is.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(n_params * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated parameter block");
}

}  // namespace

void save_mlp(std::ostream& os, const Mlp& m) {
  write_magic(os, "CRLMLP1\n");
  write_spec(os, m.spec, m.params);
}

Mlp load_mlp(std::istream& is) {
  expect_magic(is, "CRLMLP1\n");
  Mlp m;
  read_spec(is, m.spec, m.params);
  if (m.params.size() != param_count(m.spec)) {
    throw std::runtime_error("checkpoint: parameter count does not match spec");
  }
  return m;
}

void save_policy(std::ostream& os, const GaussianPolicy& p) {
  write_magic(os, "CRLPOL1\n");
  write_pod<std::int32_t>(os, p.action_dim);
  write_pod<double>(os, p.log_std_min);
  write_pod<double>(os, p.log_std_max);
  write_spec(os, p.trunk, p.params);
}

GaussianPolicy load_policy(std::istream& is) {
  expect_magic(is, "CRLPOL1\n");
  GaussianPolicy p;
  p.action_dim = read_pod<std::int32_t>(is);
  p.log_std_min = read_pod<double>(is);
  p.log_std_max = read_pod<double>(is);
  read_spec(is, p.trunk, p.params);
  if (p.params.size() != policy_param_count(p)) {
    throw std::runtime_error("checkpoint: policy parameter count mismatch");
  }
  return p;
}

}  // namespace crl
