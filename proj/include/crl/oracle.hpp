#pragma once

#include <iosfwd>
#include <vector>

#include "crl/multipliers.hpp"
#include "crl/neural.hpp"

namespace crl {
namespace oracle {

// Finite CMDP in the infinite-horizon discounted setting. Cost tables hold
// indicator values; thresholds are normalized rates in [0, 1] (multiply by
// 1/(1-gamma) for the raw discounted-sum scale).
struct TabularCMDP {
  int n_states = 0;
  int n_actions = 0;
  int n_costs = 0;
  double gamma = 0.9;
  Vec transition;                // [s][a][s'], each (s,a) row sums to 1
  Vec reward;                    // [s][a]
  std::vector<Vec> cost;         // K tables [s][a] with entries in {0,1}
  Vec thresholds;                // normalized, in [0,1]
  Vec initial;                   // P0 over states

  double p(int s, int a, int s2) const {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
  double c(int k, int s, int a) const {
    return cost[k][static_cast<std::size_t>(s) * n_actions + a];
  }
  void validate() const;  // throws on non-stochastic rows, bad costs/thresholds
};

struct TabularPolicy {
  int n_states = 0;
  int n_actions = 0;
  Vec prob;  // [s][a], rows sum to 1

  double pi(int s, int a) const { return prob[static_cast<std::size_t>(s) * n_actions + a]; }
  void validate() const;
};

TabularPolicy uniform_policy(int n_states, int n_actions);
TabularPolicy greedy_policy(const std::vector<int>& actions, int n_actions);

// Exact expected discounted sum of f under pi: solves v = f_pi + gamma P_pi v
// directly and returns P0 . v.
double exact_return(const TabularCMDP& m, const TabularPolicy& pi, const Vec& f);

// Normalized discounted state-action occupancy x(s,a); sums to 1.
Vec occupancy(const TabularCMDP& m, const TabularPolicy& pi);

// Normalized cost rate (1-gamma) * J_{C_k}; comparable to thresholds.
double normalized_cost(const TabularCMDP& m, const TabularPolicy& pi, int k);

// Exact value iteration on L(s,a) = R(s,a) - sum_k lambda_k C_k(s,a) down to
// max-norm tolerance 1e-12, then the greedy policy and its exact J_L.
std::pair<TabularPolicy, double> lagrangian_best_response(const TabularCMDP& m,
                                                          const Vec& lambda);

struct DualResult {
  Vec lambda_star;
  double dual_value = 0;            // min over the grid of g(lambda)
  bool found_feasible = false;
  double best_feasible_return = 0;  // max J_R among feasible grid best responses
  TabularPolicy best_feasible_policy;
};

// Grid search over multiplier tuples (cartesian product of the per-constraint
// value lists). g(lambda) = max_pi J_L(pi) + sum_k lambda_k d_k upper-bounds
// the constrained optimum by weak duality.
DualResult dual_minimize(const TabularCMDP& m, const std::vector<Vec>& lambda_grid);

struct GdaPoint {
  long iter = 0;
  double return_value = 0;   // J_R
  Vec costs;                 // normalized cost rates
  double lambda0 = 1;
  Vec lambda;
};

struct GdaOptions {
  long steps = 20000;
  double policy_lr = 0.05;
  double multiplier_lr = 0.01;
  MultiplierMode mode = MultiplierMode::Unnormalized;
  double z_init = 0.02;
  long record_every = 100;
  double divergence_bound = 1e6;  // |lambda| beyond this flags divergence
};

struct GdaResult {
  std::vector<GdaPoint> trace;
  TabularPolicy final_policy;
  bool diverged = false;
};

// Exact-gradient ascent on a softmax tabular policy against descent on the
// multipliers (max-clipped when unnormalized, softmax-normalized otherwise).
// Ground truth for the deep agent's saddle-point dynamics.
GdaResult gda_reference(const TabularCMDP& m, const GdaOptions& opt);

// Plain-text instance format:
//   cmdp <S> <A> <K> <gamma>
//   p <s> <a> p(s'=0) ... p(s'=S-1)     (one line per state-action)
//   r <s> <a> <value>
//   c <k> <s> <a> <value>
//   d <k> <threshold>
//   p0 P0(0) ... P0(S-1)
// Unspecified rewards/costs default to 0; omitted p0 means uniform.
TabularCMDP load_cmdp(std::istream& is);
void save_cmdp(std::ostream& os, const TabularCMDP& m);

}  // namespace oracle
}  // namespace crl
