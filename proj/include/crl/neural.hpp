#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <utility>
#include <vector>

namespace crl {

using Vec = std::vector<double>;

// Dense row-major matrix. Rows usually index batch samples.
struct Mat {
  int rows = 0, cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
  void zero() { a.assign(a.size(), 0.0); }
};

enum class Act : std::uint8_t { Identity = 0, Relu = 1, Tanh = 2 };

// Shape of a fully connected network: sizes = {in, h1, ..., out}, one
// activation per layer. When layer_norm_first is set, layer 0 applies layer
// normalization (with trainable gain and bias) between the affine map and the
// activation.
struct MlpSpec {
  std::vector<int> sizes;
  std::vector<Act> acts;
  bool layer_norm_first = false;

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  int n_layers() const { return static_cast<int>(sizes.size()) - 1; }
};

std::size_t param_count(const MlpSpec& spec);

// Parameters live in one flat vector so optimizers, target blending, finite
// differencing and checkpointing all operate on contiguous storage.
// Layout per layer l: W_l (out x in, row-major), b_l (out); layer 0 is
// followed by ln_gain (h1) and ln_bias (h1) when layer_norm_first is set.
struct Mlp {
  MlpSpec spec;
  Vec params;
};

struct LayerView {
  std::size_t w = 0, b = 0, ln_gain = 0, ln_bias = 0;  // offsets into params
};
LayerView layer_view(const MlpSpec& spec, int layer);

// Uniform fan-in init for weights, zero biases, unit layer-norm gain.
Mlp make_mlp(MlpSpec spec, std::mt19937_64& rng);

struct MlpCache {
  Mat input;                  // N x in
  std::vector<Mat> act_out;   // per layer, N x sizes[l+1], post-activation
  Mat ln_xhat;                // N x h1, normalized pre-gain values (layer 0)
  Vec ln_inv_std;             // N
  const Mat& output() const { return act_out.back(); }
};

void mlp_forward(const Mlp& m, const Mat& input, MlpCache& cache);
// Single-vector convenience; fills cache when given.
Vec mlp_forward(const Mlp& m, const Vec& input, MlpCache* cache = nullptr);

struct MlpGrads {
  Vec params;  // same layout as Mlp::params
  Mat input;   // d(objective)/d(input), N x in
};

// Exact reverse-mode gradients of the cached forward pass. output_grad is
// d(objective)/d(output), N x out. Either gradient set can be skipped.
void mlp_backward(const Mlp& m, const MlpCache& cache, const Mat& output_grad, MlpGrads& grads,
                  bool want_param_grads = true, bool want_input_grad = false);

// ---------------------------------------------------------------------------

struct AdamState {
  Vec m, v;
  long step = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(std::size_t n, double lr);

// Bias-corrected Adam descent step in place. Throws on non-finite gradients
// so a diverged run surfaces instead of silently poisoning the parameters.
void adam_step(Vec& params, const Vec& grads, AdamState& opt);

// target <- (1 - tau) * target + tau * online, elementwise.
void soft_update(Vec& target, const Vec& online, double tau);

// ---------------------------------------------------------------------------

// Squashed diagonal Gaussian policy: a tanh/layer-norm trunk feeding linear
// mean and log-std heads, actions squashed through tanh into [-1, 1]^A.
// Parameter layout: [trunk | W_mean (A x H), b_mean (A) | W_std (A x H), b_std (A)].
struct GaussianPolicy {
  MlpSpec trunk;
  int action_dim = 0;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  Vec params;
};

GaussianPolicy make_policy(int obs_dim, int action_dim, int hidden, std::mt19937_64& rng,
                           bool layer_norm = true);
std::size_t policy_param_count(const GaussianPolicy& p);

struct PolicyCache {
  MlpCache trunk;
  Mat mean, log_std_raw, log_std;  // N x A; log_std is the clamped value
  Mat eps, pre_squash, actions;    // sampling intermediates, N x A
  Vec log_prob;                    // N
};

// Mean / clamped log-std heads only (no sampling).
void policy_forward(const GaussianPolicy& p, const Mat& obs, PolicyCache& cache);

// Reparameterized draw: u = mean + exp(log_std) * eps, action = tanh(u).
// log_prob includes the tanh change-of-variables term in softplus form.
void policy_sample(const GaussianPolicy& p, const Mat& obs, std::mt19937_64& rng,
                   PolicyCache& cache);
std::pair<Vec, double> policy_sample(const GaussianPolicy& p, const Vec& obs,
                                     std::mt19937_64& rng);
Vec policy_mean_action(const GaussianPolicy& p, const Vec& obs);

// Gradient of G = sum_i logp_weight[i] * log_prob[i]
//              + sum_{i,d} dq_da(i,d) * action(i,d)
// with respect to the policy parameters, through the reparameterized sample
// held in the cache. Accumulates into grads (sized policy_param_count).
void policy_backward(const GaussianPolicy& p, const PolicyCache& cache, const Vec& logp_weight,
                     const Mat& dq_da, Vec& grads);

// ---------------------------------------------------------------------------
// Checkpoint format (little-endian):
//   "CRLMLP1\n" | u32 n_sizes | i32 sizes[] | u8 acts[] | u8 layer_norm_first
//   | u64 n_params | f64 params[]
// Policies prepend "CRLPOL1\n" | i32 action_dim | f64 log_std_min | f64
// log_std_max and then embed the trunk spec header with the joint flat
// parameter vector. Identical bytes reload to identical behavior.

void save_mlp(std::ostream& os, const Mlp& m);
Mlp load_mlp(std::istream& is);
void save_policy(std::ostream& os, const GaussianPolicy& p);
GaussianPolicy load_policy(std::istream& is);

}  // namespace crl
