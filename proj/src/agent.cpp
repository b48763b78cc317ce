#include "crl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "crl/rng.hpp"

namespace crl {
namespace agent {

namespace {

Mat concat_cols(const Mat& a, const Mat& b) {
  Mat out(a.rows, a.cols + b.cols);
  for (int i = 0; i < a.rows; ++i) {
    double* dst = out.row(i);
    const double* ar = a.row(i);
    const double* br = b.row(i);
    std::copy(ar, ar + a.cols, dst);
    std::copy(br, br + b.cols, dst + a.cols);
  }
  return out;
}

MlpSpec critic_spec(int obs_dim, int action_dim, int hidden, bool layer_norm) {
  MlpSpec s;
  s.sizes = {obs_dim + action_dim, hidden, hidden, 1};
  s.acts = {Act::Relu, Act::Relu, Act::Identity};
  s.layer_norm_first = layer_norm;
  return s;
}

MlpSpec det_policy_spec(int obs_dim, int action_dim, int hidden, bool layer_norm) {
  MlpSpec s;
  s.sizes = {obs_dim, hidden, hidden, action_dim};
  s.acts = {Act::Tanh, Act::Tanh, Act::Tanh};
  s.layer_norm_first = layer_norm;
  return s;
}

struct ObjectiveWeights {
  double w0 = 1.0;
  Vec lambda;
};

ObjectiveWeights objective_weights(const AgentState& agent, const TrainerConfig& cfg) {
  if (cfg.plain_sac) return {1.0, {}};
  ObjectiveWeights w;
  const Multipliers m = normalized_multipliers(agent.multipliers);
  w.lambda = m.lambda;
  w.w0 = m.lambda0;
  if (agent.success_enabled && cfg.bootstrap_enabled && !m.lambda.empty()) {
    w.w0 = bootstrap_weight(m.lambda0, m.lambda.back());
  }
  return w;
}

Vec random_action(int dim, std::mt19937_64& rng) {
  Vec a(dim);
  for (double& v : a) v = rand_range(rng, -1.0, 1.0);
  return a;
}

// Accumulates the action gradient of coef * mean_i min_j Q_j(s_i, a_i) for
// one twin pair; adds coef * mean(min) to obj and the per-action gradient
// into dq_da. Critic parameters stay frozen.
void accumulate_min_q_grad(const TwinCritic& tc, const Mat& x, int obs_dim, int action_dim,
                           double coef, double& obj, Mat& dq_da) {
  const int n = x.rows;
  MlpCache c1, c2;
  mlp_forward(tc.q1, x, c1);
  mlp_forward(tc.q2, x, c2);
  Mat dy1(n, 1), dy2(n, 1);
  double mean_min = 0.0;
  for (int i = 0; i < n; ++i) {
    const double q1 = c1.output()(i, 0), q2 = c2.output()(i, 0);
    mean_min += std::min(q1, q2);
    if (q1 <= q2) {
      dy1(i, 0) = coef / n;
    } else {
      dy2(i, 0) = coef / n;
    }
  }
  obj += coef * mean_min / n;
  MlpGrads g1, g2;
  mlp_backward(tc.q1, c1, dy1, g1, false, true);
  mlp_backward(tc.q2, c2, dy2, g2, false, true);
  for (int i = 0; i < n; ++i) {
    double* out = dq_da.row(i);
    const double* r1 = g1.input.row(i);
    const double* r2 = g2.input.row(i);
    for (int d = 0; d < action_dim; ++d) out[d] += r1[obs_dim + d] + r2[obs_dim + d];
  }
}

void blend_all_targets(AgentState& agent, double tau) {
  for (TwinCritic& tc : agent.critics) {
    soft_update(tc.target1.params, tc.q1.params, tau);
    soft_update(tc.target2.params, tc.q2.params, tau);
  }
  if (agent.variant == Variant::Td3) {
    soft_update(agent.det_policy_target.params, agent.det_policy.params, tau);
  }
}

}  // namespace

void TrainerConfig::validate() const {
  if (gamma <= 0 || gamma >= 1 || gamma_constraint <= 0 || gamma_constraint >= 1) {
    throw std::invalid_argument("trainer: discounts must lie in (0,1)");
  }
  if (alpha < 0 || tau < 0 || tau > 1) throw std::invalid_argument("trainer: bad alpha/tau");
  if (m_theta <= 0 || gradient_steps_per_round <= 0 || n_theta <= 0 || m_lambda <= 0 ||
      n_lambda <= 0) {
    throw std::invalid_argument("trainer: cadence and batch values must be positive");
  }
  if (static_cast<std::size_t>(n_theta) > buffer_capacity ||
      static_cast<std::size_t>(n_lambda) > buffer_capacity) {
    throw std::invalid_argument("trainer: batch sizes exceed buffer capacity");
  }
  if (lr_policy_critic <= 0 || lr_multiplier <= 0) {
    throw std::invalid_argument("trainer: learning rates must be positive");
  }
  if (total_steps < 0 || eval_every <= 0 || eval_episodes <= 0 || hidden_size <= 0) {
    throw std::invalid_argument("trainer: bad step/eval/network sizes");
  }
  if (td3_policy_delay <= 0) throw std::invalid_argument("trainer: td3 policy delay");
}

AgentState make_agent(const TrainerConfig& cfg, int obs_dim, int action_dim,
                      const std::vector<ConstraintSpec>& behavioral_specs,
                      double success_threshold, std::mt19937_64& rng) {
  cfg.validate();
  AgentState a;
  a.variant = cfg.variant;
  a.obs_dim = obs_dim;
  a.action_dim = action_dim;
  a.n_behavioral = static_cast<int>(behavioral_specs.size());
  a.success_enabled = cfg.success_constraint_enabled && !cfg.plain_sac;
  if (cfg.plain_sac && !behavioral_specs.empty()) {
    throw std::invalid_argument("plain sac path cannot carry behavioral constraints");
  }

  a.policy = make_policy(obs_dim, action_dim, cfg.hidden_size, rng, cfg.policy_layer_norm);
  a.policy_opt = make_adam(policy_param_count(a.policy), cfg.lr_policy_critic);
  if (cfg.variant == Variant::Td3) {
    a.det_policy = make_mlp(det_policy_spec(obs_dim, action_dim, cfg.hidden_size,
                                            cfg.policy_layer_norm),
                            rng);
    a.det_policy_target = a.det_policy;
    a.policy_opt = make_adam(a.det_policy.params.size(), cfg.lr_policy_critic);
  }

  for (int k = 0; k < a.n_functions(); ++k) {
    TwinCritic tc;
    tc.q1 = make_mlp(critic_spec(obs_dim, action_dim, cfg.hidden_size, cfg.critic_layer_norm), rng);
    tc.q2 = make_mlp(critic_spec(obs_dim, action_dim, cfg.hidden_size, cfg.critic_layer_norm), rng);
    tc.target1 = tc.q1;
    tc.target2 = tc.q2;
    tc.opt1 = make_adam(tc.q1.params.size(), cfg.lr_policy_critic);
    tc.opt2 = make_adam(tc.q2.params.size(), cfg.lr_policy_critic);
    a.critics.push_back(std::move(tc));
  }

  a.specs = behavioral_specs;
  if (a.success_enabled) {
    a.specs.push_back(ConstraintSpec{"success", Bound::Lower, success_threshold});
  }
  a.multipliers = make_multiplier_state(a.n_constraint_slots(), cfg.z_init, cfg.lr_multiplier,
                                        cfg.multiplier_mode);
  a.buffer = ReplayBuffer(cfg.buffer_capacity);
  return a;
}

RoundBatch make_round_batch(const Batch& batch, int n_slots) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const int b = static_cast<int>(batch.size());
  const int obs_dim = static_cast<int>(batch[0].state.size());
  const int act_dim = static_cast<int>(batch[0].action.size());
  RoundBatch rb;
  rb.obs = Mat(b, obs_dim);
  rb.act = Mat(b, act_dim);
  rb.next_obs = Mat(b, obs_dim);
  rb.reward.resize(b);
  rb.not_done.resize(b);
  rb.events = Mat(b, n_slots);
  for (int i = 0; i < b; ++i) {
    const Transition& t = batch[i];
    std::copy(t.state.begin(), t.state.end(), rb.obs.row(i));
    std::copy(t.action.begin(), t.action.end(), rb.act.row(i));
    std::copy(t.next_state.begin(), t.next_state.end(), rb.next_obs.row(i));
    rb.reward[i] = t.reward;
    rb.not_done[i] = t.done ? 0.0 : 1.0;  // time-limit truncation still bootstraps
    for (int k = 0; k < n_slots; ++k) rb.events(i, k) = t.events[k];
  }
  return rb;
}

NextActions sample_next_actions(const AgentState& agent, const Mat& next_obs,
                                const TrainerConfig& cfg, std::mt19937_64& rng) {
  NextActions out;
  if (agent.variant == Variant::Sac) {
    PolicyCache pc;
    policy_sample(agent.policy, next_obs, rng, pc);
    out.actions = std::move(pc.actions);
    out.log_prob = std::move(pc.log_prob);
    return out;
  }
  MlpCache c;
  mlp_forward(agent.det_policy_target, next_obs, c);
  out.actions = c.output();
  for (double& v : out.actions.a) {
    const double noise =
        std::clamp(cfg.td3_policy_noise * rand_gaussian(rng), -cfg.td3_noise_clip,
                   cfg.td3_noise_clip);
    v = std::clamp(v + noise, -1.0, 1.0);
  }
  return out;
}

double critic_update(AgentState& agent, const RoundBatch& batch, int k, const NextActions& next,
                     const TrainerConfig& cfg) {
  if (k < 0 || k >= agent.n_functions()) throw std::invalid_argument("critic index out of range");
  TwinCritic& tc = agent.critics[k];
  const int b = batch.obs.rows;

  const Mat x2 = concat_cols(batch.next_obs, next.actions);
  MlpCache ct1, ct2;
  mlp_forward(tc.target1, x2, ct1);
  mlp_forward(tc.target2, x2, ct2);

  const bool with_entropy = agent.variant == Variant::Sac &&
                            (k == 0 || cfg.entropy_in_constraint_critics);
  const double gamma_k = k == 0 ? cfg.gamma : cfg.gamma_constraint;
  Vec target(b);
  for (int i = 0; i < b; ++i) {
    double y = std::min(ct1.output()(i, 0), ct2.output()(i, 0));
    if (with_entropy) y -= cfg.alpha * next.log_prob[i];
    const double r_k = k == 0 ? batch.reward[i] : batch.events(i, k - 1);
    target[i] = r_k + batch.not_done[i] * gamma_k * y;
  }

  const Mat x = concat_cols(batch.obs, batch.act);
  double loss_sum = 0.0;
  for (int j = 0; j < 2; ++j) {
    Mlp& q = j == 0 ? tc.q1 : tc.q2;
    AdamState& opt = j == 0 ? tc.opt1 : tc.opt2;
    MlpCache c;
    mlp_forward(q, x, c);
    Mat dy(b, 1);
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
      const double diff = c.output()(i, 0) - target[i];
      loss += diff * diff;
      dy(i, 0) = 2.0 * diff / b;
    }
    loss /= b;
    if (!std::isfinite(loss)) throw std::runtime_error("critic update produced non-finite loss");
    loss_sum += loss;
    MlpGrads g;
    mlp_backward(q, c, dy, g, true, false);
    adam_step(q.params, g.params, opt);
  }
  if (agent.variant == Variant::Sac) {
    soft_update(tc.target1.params, tc.q1.params, cfg.tau);
    soft_update(tc.target2.params, tc.q2.params, cfg.tau);
  }
  return loss_sum / 2.0;
}

double policy_update(AgentState& agent, const RoundBatch& batch, const TrainerConfig& cfg,
                     std::mt19937_64& rng) {
  const int b = batch.obs.rows;
  PolicyCache pc;
  policy_sample(agent.policy, batch.obs, rng, pc);

  const ObjectiveWeights w = objective_weights(agent, cfg);
  const Mat x = concat_cols(batch.obs, pc.actions);

  double obj = 0.0;
  for (int i = 0; i < b; ++i) obj += -cfg.alpha * pc.log_prob[i];
  obj /= b;

  Mat dq_da(b, agent.action_dim);
  for (int k = 0; k < agent.n_functions(); ++k) {
    double coef;
    if (k == 0) {
      coef = w.w0;
    } else if (agent.success_enabled && k == agent.n_functions() - 1) {
      coef = w.lambda.back();
    } else {
      coef = -w.lambda[k - 1];
    }
    accumulate_min_q_grad(agent.critics[k], x, agent.obs_dim, agent.action_dim, coef, obj, dq_da);
  }
  if (!std::isfinite(obj)) throw std::runtime_error("policy update produced non-finite objective");

  Vec grads(policy_param_count(agent.policy), 0.0);
  Vec logp_w(b, -cfg.alpha / b);
  policy_backward(agent.policy, pc, logp_w, dq_da, grads);
  for (double& g : grads) g = -g;  // ascent
  adam_step(agent.policy.params, grads, agent.policy_opt);
  return obj;
}

double td3_policy_update(AgentState& agent, const RoundBatch& batch, const TrainerConfig& cfg) {
  const int b = batch.obs.rows;
  MlpCache pc;
  mlp_forward(agent.det_policy, batch.obs, pc);
  const Mat x = concat_cols(batch.obs, pc.output());

  const ObjectiveWeights w = objective_weights(agent, cfg);
  double obj = 0.0;
  Mat dq_da(b, agent.action_dim);
  for (int k = 0; k < agent.n_functions(); ++k) {
    double coef;
    if (k == 0) {
      coef = w.w0;
    } else if (agent.success_enabled && k == agent.n_functions() - 1) {
      coef = w.lambda.back();
    } else {
      coef = -w.lambda[k - 1];
    }
    accumulate_min_q_grad(agent.critics[k], x, agent.obs_dim, agent.action_dim, coef, obj, dq_da);
  }
  if (!std::isfinite(obj)) throw std::runtime_error("td3 policy update produced non-finite objective");

  MlpGrads g;
  mlp_backward(agent.det_policy, pc, dq_da, g, true, false);
  for (double& v : g.params) v = -v;  // ascent
  adam_step(agent.det_policy.params, g.params, agent.policy_opt);
  blend_all_targets(agent, cfg.tau);
  return obj;
}

Vec act(const AgentState& agent, const Vec& obs, ActMode mode, std::mt19937_64& rng) {
  if (agent.variant == Variant::Sac) {
    if (mode == ActMode::Deterministic) return policy_mean_action(agent.policy, obs);
    return policy_sample(agent.policy, obs, rng).first;
  }
  Vec a = mlp_forward(agent.det_policy, obs);
  if (mode == ActMode::Stochastic) {
    for (double& v : a) v = std::clamp(v + 0.1 * rand_gaussian(rng), -1.0, 1.0);
  }
  return a;
}

EvalSummary evaluate_policy(const AgentState& agent, TrainEnv& env, int episodes,
                            std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  EvalSummary s;
  s.episodes = episodes;
  std::mt19937_64 local(seed);
  long total_steps = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    Vec obs = env.reset(split_seed(seed, ep));
    double ep_return = 0.0;
    while (true) {
      Vec a = agent.diverged ? Vec(agent.action_dim, 0.0)
                             : act(agent, obs, ActMode::Deterministic, local);
      const auto st = env.step(a);
      ep_return += st.reward;
      ++total_steps;
      // Rates cover every behavioral slot the environment reports, enforced
      // or not; the trailing slot is the success indicator.
      if (s.rates.empty()) s.rates.assign(st.events.size() - 1, 0.0);
      for (std::size_t k = 0; k + 1 < st.events.size(); ++k) s.rates[k] += st.events[k];
      if (st.done) {
        s.success_rate += 1.0;
        break;
      }
      if (st.truncated) break;
      obs = st.obs;
    }
    s.return_mean += ep_return;
  }
  s.return_mean /= episodes;
  s.success_rate /= episodes;
  for (double& r : s.rates) r /= static_cast<double>(total_steps);
  return s;
}

TrainResult train(AgentState& agent, TrainEnv& env, TrainEnv& eval_env, const TrainerConfig& cfg,
                  std::uint64_t seed, const TrainHooks* hooks) {
  cfg.validate();
  TrainResult res;
  std::mt19937_64 rng(split_seed(seed, 0));
  long episode_counter = 0;
  Vec obs = env.reset(split_seed(seed, 1000000));

  const int n_slots = agent.n_constraint_slots();
  Vec latest_losses(agent.n_functions(), 0.0);
  double latest_obj = 0.0;

  for (long step = 1; step <= cfg.total_steps; ++step) {
    Vec a;
    if (step <= cfg.random_exploration_steps || agent.diverged) {
      a = random_action(agent.action_dim, rng);
    } else {
      a = act(agent, obs, ActMode::Stochastic, rng);
    }
    const auto st = env.step(a);
    agent.buffer.append(Transition{obs, a, st.reward, st.obs, st.done, st.truncated, st.events});
    agent.env_steps = step;
    obs = (st.done || st.truncated) ? env.reset(split_seed(seed, 1000000 + (++episode_counter)))
                                    : st.obs;

    if (!agent.diverged && step >= cfg.warmup_steps && step % cfg.m_theta == 0 &&
        agent.buffer.size() >= static_cast<std::size_t>(cfg.n_theta)) {
      try {
        for (long g = 0; g < cfg.gradient_steps_per_round; ++g) {
          const Batch batch = agent.buffer.sample_uniform(cfg.n_theta, rng);
          const RoundBatch rb = make_round_batch(batch, n_slots);
          const NextActions next = sample_next_actions(agent, rb.next_obs, cfg, rng);
          for (int k = 0; k < agent.n_functions(); ++k) {
            latest_losses[k] = critic_update(agent, rb, k, next, cfg);
          }
          agent.update_rounds += 1;
          if (agent.variant == Variant::Sac) {
            latest_obj = policy_update(agent, rb, cfg, rng);
          } else if (agent.update_rounds % cfg.td3_policy_delay == 0) {
            latest_obj = td3_policy_update(agent, rb, cfg);
          }
        }
      } catch (const std::runtime_error& e) {
        if (cfg.halt_on_nonfinite) {
          res.halted = true;
          res.halt_reason = e.what();
          return res;
        }
        agent.diverged = true;
        res.diverged = true;
      }
    }

    if (!cfg.plain_sac && n_slots > 0 && step % cfg.m_lambda == 0 &&
        agent.buffer.size() >= static_cast<std::size_t>(cfg.n_lambda)) {
      if (hooks && hooks->adjust_specs) hooks->adjust_specs(step, agent.specs);
      const RateEstimate rates = estimate_rates(agent.buffer.last_n(cfg.n_lambda), n_slots);
      multiplier_update(agent.multipliers, rates, agent.specs);
      const Multipliers lam = normalized_multipliers(agent.multipliers);
      res.lambda_trace.push_back(LambdaRow{step, lam.lambda0, lam.lambda});
    }

    if (step % cfg.eval_every == 0) {
      const EvalSummary es =
          evaluate_policy(agent, eval_env, cfg.eval_episodes, split_seed(seed, 3000000 + step));
      MetricsRow row;
      row.step = step;
      row.return_mean = es.return_mean;
      row.success_rate = es.success_rate;
      row.rates = es.rates;
      const Multipliers lam = normalized_multipliers(agent.multipliers);
      row.lambda0 = cfg.plain_sac ? 1.0 : lam.lambda0;
      row.lambdas = cfg.plain_sac ? Vec{} : lam.lambda;
      row.critic_losses = latest_losses;
      row.policy_objective = latest_obj;
      res.metrics.push_back(std::move(row));
    }
  }
  return res;
}

namespace {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("agent checkpoint: truncated stream");
  return v;
}

void write_vec(std::ostream& os, const Vec& v) {
  write_pod<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Vec read_vec(std::istream& is) {
  Vec v(read_pod<std::uint64_t>(is));
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!is) throw std::runtime_error("agent checkpoint: truncated vector");
  return v;
}

}  // namespace

void save_agent(std::ostream& os, const AgentState& agent, std::uint64_t config_hash) {
  os.write("CRLAGT1\n", 8);
  write_pod<std::int64_t>(os, agent.env_steps);
  write_pod<std::uint64_t>(os, config_hash);
  write_pod<std::int32_t>(os, agent.variant == Variant::Sac ? 0 : 1);
  write_pod<std::int32_t>(os, agent.obs_dim);
  write_pod<std::int32_t>(os, agent.action_dim);
  write_pod<std::int32_t>(os, agent.n_behavioral);
  write_pod<std::uint8_t>(os, agent.success_enabled ? 1 : 0);
  write_pod<std::uint8_t>(os,
                          agent.multipliers.mode == MultiplierMode::Normalized ? 1 : 0);
  write_vec(os, agent.multipliers.z);
  write_vec(os, agent.multipliers.raw);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(agent.specs.size()));
  for (const ConstraintSpec& s : agent.specs) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.name.size()));
    os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    write_pod<std::uint8_t>(os, s.bound == Bound::Upper ? 0 : 1);
    write_pod<double>(os, s.threshold);
  }
  save_policy(os, agent.policy);
  if (agent.variant == Variant::Td3) {
    save_mlp(os, agent.det_policy);
    save_mlp(os, agent.det_policy_target);
  }
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(agent.critics.size()));
  for (const TwinCritic& tc : agent.critics) {
    save_mlp(os, tc.q1);
    save_mlp(os, tc.q2);
    save_mlp(os, tc.target1);
    save_mlp(os, tc.target2);
  }
}

AgentState load_agent(std::istream& is, std::uint64_t* config_hash, long* step) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != "CRLAGT1\n") {
    throw std::runtime_error("agent checkpoint: bad magic");
  }
  AgentState a;
  const auto steps = read_pod<std::int64_t>(is);
  const auto hash = read_pod<std::uint64_t>(is);
  if (step) *step = steps;
  if (config_hash) *config_hash = hash;
  a.env_steps = steps;
  a.variant = read_pod<std::int32_t>(is) == 0 ? Variant::Sac : Variant::Td3;
  a.obs_dim = read_pod<std::int32_t>(is);
  a.action_dim = read_pod<std::int32_t>(is);
  a.n_behavioral = read_pod<std::int32_t>(is);
  a.success_enabled = read_pod<std::uint8_t>(is) != 0;
  a.multipliers.mode = read_pod<std::uint8_t>(is) != 0 ? MultiplierMode::Normalized
                                                       : MultiplierMode::Unnormalized;
  a.multipliers.z = read_vec(is);
  a.multipliers.raw = read_vec(is);
  a.multipliers.adam = make_adam(a.multipliers.z.size(), 0.03);
  const auto n_specs = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_specs; ++i) {
    ConstraintSpec s;
    const auto len = read_pod<std::uint32_t>(is);
    s.name.resize(len);
    is.read(s.name.data(), len);
    s.bound = read_pod<std::uint8_t>(is) == 0 ? Bound::Upper : Bound::Lower;
    s.threshold = read_pod<double>(is);
    a.specs.push_back(std::move(s));
  }
  a.policy = load_policy(is);
  if (a.variant == Variant::Td3) {
    a.det_policy = load_mlp(is);
    a.det_policy_target = load_mlp(is);
  }
  const auto n_critics = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_critics; ++i) {
    TwinCritic tc;
    tc.q1 = load_mlp(is);
    tc.q2 = load_mlp(is);
    tc.target1 = load_mlp(is);
    tc.target2 = load_mlp(is);
    tc.opt1 = make_adam(tc.q1.params.size(), 3e-4);
    tc.opt2 = make_adam(tc.q2.params.size(), 3e-4);
    a.critics.push_back(std::move(tc));
  }
  a.policy_opt = make_adam(a.variant == Variant::Sac ? policy_param_count(a.policy)
                                                     : a.det_policy.params.size(),
                           3e-4);
  a.buffer = ReplayBuffer(1);
  return a;
}

}  // namespace agent
}  // namespace crl
