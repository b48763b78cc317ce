#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "crl/core.hpp"
#include "crl/multipliers.hpp"
#include "crl/neural.hpp"

namespace crl {
namespace agent {

enum class Variant { Sac, Td3 };

struct TrainerConfig {
  double gamma = 0.9;
  double gamma_constraint = 0.9;  // discount for the constraint critics
  double alpha = 0.02;            // fixed entropy coefficient
  double tau = 0.005;

  long m_theta = 200;                  // env steps between update rounds
  long gradient_steps_per_round = 200; // rounds of critic+policy updates each time
  int n_theta = 256;                   // uniform minibatch size
  long m_lambda = 2000;                // env steps between multiplier updates
  int n_lambda = 2000;                 // most-recent transitions per multiplier update

  long random_exploration_steps = 10000;
  long warmup_steps = 2560;
  double lr_policy_critic = 3e-4;
  double lr_multiplier = 0.03;
  double z_init = 0.02;

  long total_steps = 300000;
  long eval_every = 20000;
  int eval_episodes = 10;

  std::size_t buffer_capacity = 1000000;
  int hidden_size = 256;
  bool policy_layer_norm = true;
  bool critic_layer_norm = false;

  Variant variant = Variant::Sac;
  bool bootstrap_enabled = true;
  bool success_constraint_enabled = true;
  // Reference unconstrained path: the reward weight is pinned to 1 and the
  // multiplier machinery is bypassed entirely.
  bool plain_sac = false;
  // Algorithm-literal default: the entropy bonus appears in every critic's
  // target, constraint critics included.
  bool entropy_in_constraint_critics = true;
  MultiplierMode multiplier_mode = MultiplierMode::Normalized;
  // When false, a non-finite update latches divergence and the run keeps
  // collecting with random actions instead of aborting.
  bool halt_on_nonfinite = true;

  double td3_policy_noise = 0.2;
  double td3_noise_clip = 0.5;
  double td3_exploration_noise = 0.1;
  int td3_policy_delay = 2;

  void validate() const;
};

// Environment surface the trainer drives. Step events arrive already reduced
// to the run's constraint slots: K behavioral entries then the success flag.
class TrainEnv {
 public:
  virtual ~TrainEnv() = default;
  virtual int obs_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Vec reset(std::uint64_t seed) = 0;
  struct Step {
    Vec obs;
    double reward = 0;
    bool done = false;
    bool truncated = false;
    EventVector events;
  };
  virtual Step step(const Vec& action) = 0;
};

struct TwinCritic {
  Mlp q1, q2, target1, target2;
  AdamState opt1, opt2;
};

struct AgentState {
  Variant variant = Variant::Sac;
  int obs_dim = 0;
  int action_dim = 0;
  int n_behavioral = 0;      // K
  bool success_enabled = false;

  GaussianPolicy policy;     // sac
  Mlp det_policy, det_policy_target;  // td3
  AdamState policy_opt;

  std::vector<TwinCritic> critics;  // 1 + K (+1 when success is enabled)
  MultiplierState multipliers;
  std::vector<ConstraintSpec> specs;  // aligned with multiplier slots

  ReplayBuffer buffer{1};
  long env_steps = 0;
  long update_rounds = 0;
  bool diverged = false;

  int n_functions() const { return 1 + n_behavioral + (success_enabled ? 1 : 0); }
  int n_constraint_slots() const { return n_behavioral + (success_enabled ? 1 : 0); }
};

AgentState make_agent(const TrainerConfig& cfg, int obs_dim, int action_dim,
                      const std::vector<ConstraintSpec>& behavioral_specs,
                      double success_threshold, std::mt19937_64& rng);

// Columnar view of a sampled minibatch.
struct RoundBatch {
  Mat obs, act, next_obs;
  Vec reward, not_done;
  Mat events;  // B x n_slots
};
RoundBatch make_round_batch(const Batch& batch, int n_slots);

struct NextActions {
  Mat actions;
  Vec log_prob;  // empty for td3
};
NextActions sample_next_actions(const AgentState& agent, const Mat& next_obs,
                                const TrainerConfig& cfg, std::mt19937_64& rng);

// One Adam step on both twins of ensemble k against the shared min-target,
// then a soft target blend (sac; td3 defers blending to the policy round).
// Returns the mean squared error across the twins.
double critic_update(AgentState& agent, const RoundBatch& batch, int k,
                     const NextActions& next, const TrainerConfig& cfg);

// One Adam ascent step on the weighted-Lagrangian policy objective; returns
// the objective value. Multipliers are read once and held constant.
double policy_update(AgentState& agent, const RoundBatch& batch, const TrainerConfig& cfg,
                     std::mt19937_64& rng);

// TD3 policy round: deterministic-policy ascent on the same Lagrangian
// combination (no entropy) plus all target blends.
double td3_policy_update(AgentState& agent, const RoundBatch& batch, const TrainerConfig& cfg);

enum class ActMode { Stochastic, Deterministic };
Vec act(const AgentState& agent, const Vec& obs, ActMode mode, std::mt19937_64& rng);

struct EvalSummary {
  double return_mean = 0;
  double success_rate = 0;
  Vec rates;  // per behavioral slot
  int episodes = 0;
};
EvalSummary evaluate_policy(const AgentState& agent, TrainEnv& env, int episodes,
                            std::uint64_t seed);

struct MetricsRow {
  long step = 0;
  double return_mean = 0;
  double success_rate = 0;
  Vec rates;
  double lambda0 = 1;
  Vec lambdas;
  Vec critic_losses;
  double policy_objective = 0;
};

struct LambdaRow {
  long step = 0;
  double lambda0 = 1;
  Vec lambdas;
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<LambdaRow> lambda_trace;
  bool halted = false;
  bool diverged = false;
  std::string halt_reason;
};

struct TrainHooks {
  // Invoked before each multiplier update; may rewrite thresholds in place.
  std::function<void(long step, std::vector<ConstraintSpec>&)> adjust_specs;
};

// Full training loop: one environment step per iteration, critic/policy
// rounds every m_theta steps, a multiplier step on the most recent n_lambda
// transitions every m_lambda steps, and a deterministic evaluation every
// eval_every steps. Bit-reproducible from (seed, config, build).
TrainResult train(AgentState& agent, TrainEnv& env, TrainEnv& eval_env,
                  const TrainerConfig& cfg, std::uint64_t seed,
                  const TrainHooks* hooks = nullptr);

// Parameter checkpoint: manifest (step, config hash, multiplier state) plus
// every network in the flat binary format. Optimizer moments and the replay
// buffer are not part of a checkpoint.
void save_agent(std::ostream& os, const AgentState& agent, std::uint64_t config_hash);
AgentState load_agent(std::istream& is, std::uint64_t* config_hash = nullptr,
                      long* step = nullptr);

}  // namespace agent
}  // namespace crl
