#pragma once

#include <vector>

#include "crl/core.hpp"
#include "crl/neural.hpp"

namespace crl {

enum class MultiplierMode { Normalized, Unnormalized };

// Constraint weights for the policy objective. In normalized mode they live
// on the probability simplex: lambda0 + sum(lambda) == 1. In unnormalized
// mode lambda0 is fixed at 1 and the entries are the raw clipped multipliers.
struct Multipliers {
  double lambda0 = 1.0;
  Vec lambda;
};

// Softmax-parameterized multiplier bank. z holds one logit per constraint
// slot (the success slot last, when present); the main-objective slot is a
// frozen dummy logit at 0 and is never updated.
struct MultiplierState {
  MultiplierMode mode = MultiplierMode::Normalized;
  Vec z;        // normalized mode logits
  Vec raw;      // unnormalized mode multipliers, kept >= 0
  AdamState adam;  // over z; adam.lr is also the unnormalized step size
};

MultiplierState make_multiplier_state(int n_constraints, double z_init, double lr,
                                      MultiplierMode mode = MultiplierMode::Normalized);

struct RateEstimate {
  Vec rates;  // per constraint slot, in [0,1]
  std::size_t batch_size = 0;
};

// Mean of event flag k over the batch; every sample weighs equally.
double cost_rate(const std::vector<EventVector>& batch, int k);

// Rates for the first n_slots event entries of a transition batch.
RateEstimate estimate_rates(const Batch& batch, int n_slots);

Multipliers normalized_multipliers(const MultiplierState& state);

// Objective weight when the success constraint doubles as a bootstrap:
// the larger of the dummy-slot weight and the success-slot weight.
double bootstrap_weight(double lambda0, double lambda_success);

// One multiplier step. Normalized mode: Adam descent on
// loss(z) = sum_k c_k * lambda_k(z), with c_k = threshold - rate for upper
// bounds and rate - threshold for lower bounds, differentiated through the
// full softmax. Unnormalized mode: raw_k <- max(0, raw_k - lr * c_k).
void multiplier_update(MultiplierState& state, const RateEstimate& rates,
                       const std::vector<ConstraintSpec>& specs);

}  // namespace crl
