#include "crl/multipliers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crl {

MultiplierState make_multiplier_state(int n_constraints, double z_init, double lr,
                                      MultiplierMode mode) {
  if (n_constraints < 0) throw std::invalid_argument("negative constraint count");
  MultiplierState s;
  s.mode = mode;
  if (mode == MultiplierMode::Normalized) {
    s.z.assign(n_constraints, z_init);
    s.adam = make_adam(s.z.size(), lr);
  } else {
    s.raw.assign(n_constraints, std::max(0.0, z_init));
    s.adam = make_adam(0, lr);
  }
  return s;
}

double cost_rate(const std::vector<EventVector>& batch, int k) {
  if (batch.empty()) throw std::invalid_argument("cost_rate: empty batch");
  double sum = 0.0;
  for (const EventVector& e : batch) {
    if (k < 0 || k >= static_cast<int>(e.size())) {
      throw std::invalid_argument("cost_rate: constraint index out of range");
    }
    sum += e[k];
  }
  return sum / static_cast<double>(batch.size());
}

RateEstimate estimate_rates(const Batch& batch, int n_slots) {
  if (batch.empty()) throw std::invalid_argument("estimate_rates: empty batch");
  RateEstimate est;
  est.rates.assign(n_slots, 0.0);
  est.batch_size = batch.size();
  for (const Transition& t : batch) {
    if (static_cast<int>(t.events.size()) < n_slots) {
      throw std::invalid_argument("estimate_rates: transition has fewer event slots than requested");
    }
    for (int k = 0; k < n_slots; ++k) est.rates[k] += t.events[k];
  }
  for (double& r : est.rates) r /= static_cast<double>(batch.size());
  return est;
}

Multipliers normalized_multipliers(const MultiplierState& state) {
  Multipliers out;
  if (state.mode == MultiplierMode::Unnormalized) {
    out.lambda0 = 1.0;
    out.lambda = state.raw;
    return out;
  }
  // Softmax over (a0 = 0, z_1..z_n), stabilized by the max logit.
  double max_logit = 0.0;
  for (double z : state.z) max_logit = std::max(max_logit, z);
  double denom = std::exp(-max_logit);
  out.lambda.resize(state.z.size());
  for (std::size_t k = 0; k < state.z.size(); ++k) {
    out.lambda[k] = std::exp(state.z[k] - max_logit);
    denom += out.lambda[k];
  }
  for (double& l : out.lambda) l /= denom;
  out.lambda0 = std::exp(-max_logit) / denom;
  return out;
}

double bootstrap_weight(double lambda0, double lambda_success) {
  return std::max(lambda0, lambda_success);
}

void multiplier_update(MultiplierState& state, const RateEstimate& rates,
                       const std::vector<ConstraintSpec>& specs) {
  const std::size_t n =
      state.mode == MultiplierMode::Normalized ? state.z.size() : state.raw.size();
  if (rates.rates.size() != n || specs.size() != n) {
    throw std::invalid_argument("multiplier_update: slot count mismatch");
  }
  Vec c(n);  // violation coefficients, negative when the constraint is violated
  for (std::size_t k = 0; k < n; ++k) {
    const double j = rates.rates[k], d = specs[k].threshold;
    c[k] = specs[k].bound == Bound::Lower ? (j - d) : (d - j);
  }
  if (state.mode == MultiplierMode::Unnormalized) {
    for (std::size_t k = 0; k < n; ++k) {
      state.raw[k] = std::max(0.0, state.raw[k] - state.adam.lr * c[k]);
    }
    return;
  }
  // d/dz_i sum_j c_j lambda_j = lambda_i (c_i - sum_j c_j lambda_j)
  const Multipliers lam = normalized_multipliers(state);
  double mix = 0.0;
  for (std::size_t j = 0; j < n; ++j) mix += c[j] * lam.lambda[j];
  Vec grad(n);
  for (std::size_t i = 0; i < n; ++i) grad[i] = lam.lambda[i] * (c[i] - mix);
  adam_step(state.z, grad, state.adam);
}

}  // namespace crl
