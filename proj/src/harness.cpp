#include "crl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "crl/rng.hpp"
#include "crl/svg_plot.hpp"

namespace crl {
namespace harness {

namespace {

namespace fs = std::filesystem;

struct Binding {
  int slot;
  bool invert;
  double default_threshold;  // < 0 means "must be set explicitly"
};

const std::map<std::string, Binding>& binding_table() {
  static const std::map<std::string, Binding> table = {
      {"not-looking", {arena::kEventNotLooking, false, 0.10}},
      {"looking", {arena::kEventNotLooking, true, -1.0}},
      {"not-on-ground", {arena::kEventNotOnGround, false, 0.40}},
      {"on-ground", {arena::kEventNotOnGround, true, -1.0}},
      {"in-lava", {arena::kEventInLava, false, 0.01}},
      {"not-in-lava", {arena::kEventInLava, true, -1.0}},
      {"above-speed", {arena::kEventAboveSpeed, false, 0.01}},
      {"under-energy", {arena::kEventUnderEnergy, false, 0.01}},
  };
  return table;
}

double apply_event(const EventVector& raw, int slot, bool invert) {
  const double v = raw[slot];
  return invert ? 1.0 - v : v;
}

}  // namespace

ActiveConstraint resolve_constraint(const std::string& name,
                                    std::optional<double> threshold_override) {
  const auto it = binding_table().find(name);
  if (it == binding_table().end()) {
    std::string known;
    for (const auto& [k, v] : binding_table()) known += (known.empty() ? "" : ", ") + k;
    throw std::runtime_error("unknown constraint '" + name + "'; known: " + known);
  }
  ActiveConstraint c;
  c.name = name;
  c.raw_slot = it->second.slot;
  c.invert = it->second.invert;
  double threshold = it->second.default_threshold;
  if (threshold_override) threshold = *threshold_override;
  if (threshold < 0.0 || threshold > 1.0) {
    throw std::runtime_error("constraint '" + name + "' needs a threshold in [0,1]");
  }
  c.spec = ConstraintSpec{name, Bound::Upper, threshold};
  return c;
}

ArenaTrainEnv::ArenaTrainEnv(arena::ArenaConfig config, std::vector<ActiveConstraint> constraints,
                             std::vector<PenaltyTerm> penalties)
    : arena_(std::move(config)),
      constraints_(std::move(constraints)),
      penalties_(std::move(penalties)) {}

Vec ArenaTrainEnv::reset(std::uint64_t seed) { return arena_.reset(seed); }

agent::TrainEnv::Step ArenaTrainEnv::step(const Vec& action) {
  const arena::StepResult r = arena_.step(arena::to_action(action));
  Step out;
  out.obs = r.obs;
  out.done = r.done;
  out.truncated = r.truncated;
  out.reward = r.reward;
  for (const PenaltyTerm& p : penalties_) {
    out.reward -= p.weight * apply_event(r.events, p.raw_slot, p.invert);
  }
  out.events.reserve(constraints_.size() + 1);
  for (const ActiveConstraint& c : constraints_) {
    out.events.push_back(static_cast<std::uint8_t>(apply_event(r.events, c.raw_slot, c.invert)));
  }
  out.events.push_back(r.events[arena::kEventReachedGoal]);
  return out;
}

RunConfig RunConfig::from_file(const std::string& path) {
  KeyValueConfig cfg = KeyValueConfig::from_file(path);
  return from_config(cfg);
}

RunConfig RunConfig::from_config(KeyValueConfig& cfg) {
  RunConfig rc;
  rc.config_hash = cfg.content_hash();
  rc.name = cfg.get_string("experiment.name", rc.name);
  rc.seeds = cfg.get_u64_list("experiment.seeds", {1, 2, 3, 4, 5});
  if (rc.seeds.empty()) throw std::runtime_error("config: experiment.seeds must be non-empty");
  rc.out_dir = cfg.get_string("experiment.out_dir", rc.out_dir);
  rc.workers = cfg.get_int("experiment.workers", rc.workers);

  arena::ArenaConfig& a = rc.arena;
  a.half_extent = cfg.get_double("arena.half_extent", a.half_extent);
  a.max_steps = cfg.get_int("arena.max_steps", a.max_steps);
  a.goal_radius = cfg.get_double("arena.goal_radius", a.goal_radius);
  a.marker_x = cfg.get_double("arena.marker_x", a.marker_x);
  a.marker_z = cfg.get_double("arena.marker_z", a.marker_z);
  a.fov_half_angle = cfg.get_double("arena.fov_half_angle", a.fov_half_angle);
  a.max_speed = cfg.get_double("arena.max_speed", a.max_speed);
  a.max_yaw = cfg.get_double("arena.max_yaw", a.max_yaw);
  a.speed_limit = cfg.get_double("arena.speed_limit", a.speed_limit);
  a.energy_drain = cfg.get_double("arena.energy_drain", a.energy_drain);
  a.energy_recharge = cfg.get_double("arena.energy_recharge", a.energy_recharge);
  a.energy_floor = cfg.get_double("arena.energy_floor", a.energy_floor);
  a.jump_duration = cfg.get_int("arena.jump_duration", a.jump_duration);
  a.shaping_scale = cfg.get_double("arena.shaping_scale", a.shaping_scale);
  const std::vector<double> quads = cfg.get_double_list("arena.lava_rects", {});
  if (quads.size() % 4 != 0) {
    throw std::runtime_error("config: arena.lava_rects needs x0,z0,x1,z1 quadruples");
  }
  for (std::size_t i = 0; i + 3 < quads.size(); i += 4) {
    a.lava_rects.push_back(arena::Rect{quads[i], quads[i + 1], quads[i + 2], quads[i + 3]});
  }
  a.validate();

  agent::TrainerConfig& t = rc.trainer;
  t.gamma = cfg.get_double("trainer.gamma", t.gamma);
  t.gamma_constraint = cfg.get_double("trainer.gamma_constraint", t.gamma);
  t.alpha = cfg.get_double("trainer.alpha", t.alpha);
  t.tau = cfg.get_double("trainer.tau", t.tau);
  t.m_theta = cfg.get_long("trainer.m_theta", t.m_theta);
  t.gradient_steps_per_round =
      cfg.get_long("trainer.gradient_steps_per_round", t.m_theta);
  t.n_theta = cfg.get_int("trainer.n_theta", t.n_theta);
  t.m_lambda = cfg.get_long("trainer.m_lambda", t.m_lambda);
  t.n_lambda = cfg.get_int("trainer.n_lambda", t.n_lambda);
  t.random_exploration_steps =
      cfg.get_long("trainer.random_exploration_steps", t.random_exploration_steps);
  t.warmup_steps = cfg.get_long("trainer.warmup_steps", t.warmup_steps);
  t.lr_policy_critic = cfg.get_double("trainer.lr_policy_critic", t.lr_policy_critic);
  t.lr_multiplier = cfg.get_double("trainer.lr_multiplier", t.lr_multiplier);
  t.z_init = cfg.get_double("trainer.z_init", t.z_init);
  t.total_steps = cfg.get_long("trainer.total_steps", t.total_steps);
  t.eval_every = cfg.get_long("trainer.eval_every", t.eval_every);
  t.eval_episodes = cfg.get_int("trainer.eval_episodes", t.eval_episodes);
  t.buffer_capacity =
      static_cast<std::size_t>(cfg.get_long("trainer.buffer_capacity",
                                            static_cast<long>(t.buffer_capacity)));
  t.hidden_size = cfg.get_int("trainer.hidden_size", t.hidden_size);
  t.policy_layer_norm = cfg.get_bool("trainer.policy_layer_norm", t.policy_layer_norm);
  t.critic_layer_norm = cfg.get_bool("trainer.critic_layer_norm", t.critic_layer_norm);
  const std::string variant = cfg.get_string("trainer.variant", "sac");
  if (variant == "sac") {
    t.variant = agent::Variant::Sac;
  } else if (variant == "td3") {
    t.variant = agent::Variant::Td3;
  } else {
    throw std::runtime_error("config: trainer.variant must be sac or td3");
  }
  t.bootstrap_enabled = cfg.get_bool("trainer.bootstrap_enabled", t.bootstrap_enabled);
  t.success_constraint_enabled =
      cfg.get_bool("trainer.success_constraint_enabled", t.success_constraint_enabled);
  t.plain_sac = cfg.get_bool("trainer.plain_sac", t.plain_sac);
  t.entropy_in_constraint_critics =
      cfg.get_bool("trainer.entropy_in_constraint_critics", t.entropy_in_constraint_critics);
  const std::string mode = cfg.get_string("trainer.multiplier_mode", "normalized");
  if (mode == "normalized") {
    t.multiplier_mode = MultiplierMode::Normalized;
  } else if (mode == "unnormalized") {
    t.multiplier_mode = MultiplierMode::Unnormalized;
  } else {
    throw std::runtime_error("config: trainer.multiplier_mode must be normalized or unnormalized");
  }
  t.halt_on_nonfinite = cfg.get_bool("trainer.halt_on_nonfinite", t.halt_on_nonfinite);
  t.td3_policy_noise = cfg.get_double("trainer.td3_policy_noise", t.td3_policy_noise);
  t.td3_noise_clip = cfg.get_double("trainer.td3_noise_clip", t.td3_noise_clip);
  t.td3_exploration_noise =
      cfg.get_double("trainer.td3_exploration_noise", t.td3_exploration_noise);
  t.td3_policy_delay = cfg.get_int("trainer.td3_policy_delay", t.td3_policy_delay);
  t.validate();

  rc.constraints_enforced = cfg.get_bool("constraints.enforced", rc.constraints_enforced);
  for (const std::string& name : cfg.get_string_list("constraints.active", {})) {
    std::optional<double> threshold;
    const std::string key = "constraints.threshold." + name;
    if (cfg.has(key)) threshold = cfg.get_double(key, 0.0);
    rc.constraints.push_back(resolve_constraint(name, threshold));
  }
  rc.success_threshold = cfg.get_double("success.threshold", rc.success_threshold);

  rc.stability_switch_fraction =
      cfg.get_double("stability.switch_fraction", rc.stability_switch_fraction);
  rc.stability_impossible_threshold =
      cfg.get_double("stability.impossible_threshold", rc.stability_impossible_threshold);
  rc.stability_feasible_threshold =
      cfg.get_double("stability.feasible_threshold", rc.stability_feasible_threshold);

  for (const std::string& name : cfg.keys_with_prefix("grid.weights.")) {
    rc.grid_names.push_back(name);
    rc.grid_weights.push_back(cfg.get_double_list("grid.weights." + name, {}));
    if (rc.grid_weights.back().empty()) {
      throw std::runtime_error("config: grid.weights." + name + " must be a non-empty list");
    }
    for (double w : rc.grid_weights.back()) {
      if (w < 0) throw std::runtime_error("config: grid weights must be >= 0");
    }
  }
  rc.grid_performance_floor =
      cfg.get_double("grid.performance_floor", rc.grid_performance_floor);
  rc.grid_eval_episodes = cfg.get_int("grid.eval_episodes", rc.grid_eval_episodes);

  cfg.ensure_all_consumed();
  return rc;
}

EvalReport evaluate(const ActFn& act, const arena::ArenaConfig& config,
                    const std::vector<ActiveConstraint>& constraints, int episodes,
                    std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  ArenaTrainEnv env(config, constraints);
  EvalReport rep;
  rep.episodes = episodes;
  for (const ActiveConstraint& c : constraints) rep.rate_names.push_back(c.name);
  rep.rates.assign(constraints.size(), 0.0);
  long total_steps = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    Vec obs = env.reset(split_seed(seed, ep));
    double ep_return = 0.0;
    while (true) {
      const auto st = env.step(act(obs));
      ep_return += st.reward;
      ++total_steps;
      for (std::size_t k = 0; k < constraints.size(); ++k) rep.rates[k] += st.events[k];
      if (st.done) {
        rep.success_rate += 1.0;
        break;
      }
      if (st.truncated) break;
      obs = st.obs;
    }
    rep.return_mean += ep_return;
  }
  rep.return_mean /= episodes;
  rep.success_rate /= episodes;
  for (double& r : rep.rates) r /= static_cast<double>(total_steps);
  return rep;
}

EvalReport evaluate(const agent::AgentState& ag, const arena::ArenaConfig& config,
                    const std::vector<ActiveConstraint>& constraints, int episodes,
                    std::uint64_t seed) {
  std::mt19937_64 unused(0);
  return evaluate(
      [&](const Vec& obs) { return agent::act(ag, obs, agent::ActMode::Deterministic, unused); },
      config, constraints, episodes, seed);
}

const char* to_string(FeasibilityClass c) {
  switch (c) {
    case FeasibilityClass::FeasiblePerformant: return "feasible-performant";
    case FeasibilityClass::Feasible: return "feasible";
    default: return "infeasible";
  }
}

FeasibilityClass classify_feasible(const EvalReport& report,
                                   const std::vector<ConstraintSpec>& specs,
                                   double performance_floor) {
  if (specs.size() != report.rates.size()) {
    throw std::invalid_argument("classify_feasible: spec/rate count mismatch");
  }
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const bool violated = specs[k].bound == Bound::Upper
                              ? report.rates[k] > specs[k].threshold
                              : report.rates[k] < specs[k].threshold;
    if (violated) return FeasibilityClass::Infeasible;
  }
  return report.success_rate >= performance_floor ? FeasibilityClass::FeasiblePerformant
                                                  : FeasibilityClass::Feasible;
}

void run_jobs(const std::vector<std::function<void()>>& jobs, int workers) {
  if (workers < 1) workers = 1;
  workers = std::min<int>(workers, static_cast<int>(jobs.size()));
  if (workers <= 1) {
    for (const auto& job : jobs) job();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        jobs[i]();
      }
    });
  }
  for (auto& t : threads) t.join();
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string metrics_csv_string(const std::vector<agent::MetricsRow>& rows,
                               const std::vector<std::string>& rate_names, int n_lambda_slots) {
  std::ostringstream os;
  os << "step,return_mean,success_rate";
  for (const std::string& n : rate_names) os << ",rate_" << n;
  if (n_lambda_slots > 0) {
    for (int k = 0; k <= n_lambda_slots; ++k) os << ",lambda_" << k;
  }
  int n_losses = rows.empty() ? 0 : static_cast<int>(rows[0].critic_losses.size());
  for (int k = 0; k < n_losses; ++k) os << ",critic_loss_" << k;
  os << ",policy_objective\n";
  for (const agent::MetricsRow& r : rows) {
    os << r.step << ',' << format_double(r.return_mean) << ',' << format_double(r.success_rate);
    for (std::size_t k = 0; k < rate_names.size(); ++k) {
      os << ',' << format_double(k < r.rates.size() ? r.rates[k] : 0.0);
    }
    if (n_lambda_slots > 0) {
      os << ',' << format_double(r.lambda0);
      for (int k = 0; k < n_lambda_slots; ++k) {
        os << ',' << format_double(k < static_cast<int>(r.lambdas.size()) ? r.lambdas[k] : 0.0);
      }
    }
    for (double l : r.critic_losses) os << ',' << format_double(l);
    os << ',' << format_double(r.policy_objective) << '\n';
  }
  return os.str();
}

void write_metrics_csv(const std::string& path, const std::vector<agent::MetricsRow>& rows,
                       const std::vector<std::string>& rate_names, int n_lambda_slots) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << metrics_csv_string(rows, rate_names, n_lambda_slots);
}

void write_lambda_csv(const std::string& path, const std::vector<agent::LambdaRow>& rows,
                      int n_lambda_slots) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "step";
  for (int k = 0; k <= n_lambda_slots; ++k) f << ",lambda_" << k;
  f << "\n";
  for (const agent::LambdaRow& r : rows) {
    f << r.step << ',' << format_double(r.lambda0);
    for (int k = 0; k < n_lambda_slots; ++k) {
      f << ',' << format_double(k < static_cast<int>(r.lambdas.size()) ? r.lambdas[k] : 0.0);
    }
    f << '\n';
  }
}

namespace {

std::vector<ConstraintSpec> enforced_specs(const RunConfig& config) {
  std::vector<ConstraintSpec> specs;
  if (config.constraints_enforced) {
    for (const ActiveConstraint& c : config.constraints) specs.push_back(c.spec);
  }
  return specs;
}

std::vector<std::string> rate_names_of(const RunConfig& config) {
  std::vector<std::string> names;
  for (const ActiveConstraint& c : config.constraints) names.push_back(c.name);
  return names;
}

SeedOutcome train_one_seed(const RunConfig& config, std::uint64_t seed,
                           const agent::TrainHooks* hooks, const agent::TrainerConfig& trainer,
                           const std::string& checkpoint_tag) {
  SeedOutcome out;
  out.seed = seed;
  try {
    ArenaTrainEnv env(config.arena, config.constraints);
    ArenaTrainEnv eval_env(config.arena, config.constraints);
    std::mt19937_64 init_rng(split_seed(seed, 77));
    agent::AgentState ag = agent::make_agent(trainer, env.obs_dim(), env.action_dim(),
                                             enforced_specs(config), config.success_threshold,
                                             init_rng);
    out.result = agent::train(ag, env, eval_env, trainer, seed, hooks);
    if (out.result.halted) {
      out.failed = true;
      out.error = out.result.halt_reason;
    }
    const fs::path dir(config.out_dir);
    std::ofstream ck(dir / ("checkpoint_" + checkpoint_tag + ".bin"), std::ios::binary);
    agent::save_agent(ck, ag, config.config_hash);
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

void write_summary_csv(const std::string& path, const std::vector<SeedOutcome>& outcomes,
                       const std::vector<std::string>& rate_names) {
  // Collect per-step statistics across the seeds that completed.
  std::map<long, std::vector<const agent::MetricsRow*>> by_step;
  for (const SeedOutcome& o : outcomes) {
    if (o.failed) continue;
    for (const agent::MetricsRow& r : o.result.metrics) by_step[r.step].push_back(&r);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "step,n_seeds,return_mean,return_stderr,success_rate,success_stderr";
  for (const std::string& n : rate_names) f << ",rate_" << n << "_mean,rate_" << n << "_stderr";
  f << "\n";
  auto mean_stderr = [](const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    const double se = xs.size() > 1 ? std::sqrt(var / (n - 1)) / std::sqrt(n) : 0.0;
    return std::pair<double, double>(mean, se);
  };
  for (const auto& [step, rows] : by_step) {
    std::vector<double> rets, succ;
    for (const auto* r : rows) {
      rets.push_back(r->return_mean);
      succ.push_back(r->success_rate);
    }
    const auto [rm, rs] = mean_stderr(rets);
    const auto [sm, ss] = mean_stderr(succ);
    f << step << ',' << rows.size() << ',' << format_double(rm) << ',' << format_double(rs) << ','
      << format_double(sm) << ',' << format_double(ss);
    for (std::size_t k = 0; k < rate_names.size(); ++k) {
      std::vector<double> vals;
      for (const auto* r : rows) vals.push_back(k < r->rates.size() ? r->rates[k] : 0.0);
      const auto [vm, vs] = mean_stderr(vals);
      f << ',' << format_double(vm) << ',' << format_double(vs);
    }
    f << '\n';
  }
}

void emit_run_plots(const RunConfig& config, const std::vector<SeedOutcome>& outcomes) {
  std::vector<svg::Series> ret_series, succ_series, lam_series;
  for (const SeedOutcome& o : outcomes) {
    if (o.failed) continue;
    svg::Series ret{"seed " + std::to_string(o.seed), {}, {}};
    svg::Series succ = ret;
    for (const agent::MetricsRow& r : o.result.metrics) {
      ret.x.push_back(static_cast<double>(r.step));
      ret.y.push_back(r.return_mean);
      succ.x.push_back(static_cast<double>(r.step));
      succ.y.push_back(r.success_rate);
    }
    ret_series.push_back(std::move(ret));
    succ_series.push_back(std::move(succ));
  }
  if (!outcomes.empty() && !outcomes.front().failed &&
      !outcomes.front().result.lambda_trace.empty()) {
    const auto& trace = outcomes.front().result.lambda_trace;
    const int slots = static_cast<int>(trace.front().lambdas.size());
    for (int k = 0; k <= slots; ++k) {
      svg::Series s{"lambda_" + std::to_string(k), {}, {}};
      for (const agent::LambdaRow& r : trace) {
        s.x.push_back(static_cast<double>(r.step));
        s.y.push_back(k == 0 ? r.lambda0 : r.lambdas[k - 1]);
      }
      lam_series.push_back(std::move(s));
    }
  }
  const fs::path dir(config.out_dir);
  if (!ret_series.empty()) {
    svg::write_line_plot((dir / "return.svg").string(), config.name + ": evaluation return",
                         "environment steps", ret_series);
    svg::write_line_plot((dir / "success.svg").string(), config.name + ": evaluation success rate",
                         "environment steps", succ_series);
  }
  if (!lam_series.empty()) {
    svg::write_line_plot((dir / "lambdas.svg").string(), config.name + ": multipliers (seed 0)",
                         "environment steps", lam_series);
  }
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& config) {
  fs::create_directories(config.out_dir);
  ExperimentResult res;
  res.outcomes.resize(config.seeds.size());

  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    jobs.push_back([&, i]() {
      res.outcomes[i] = train_one_seed(config, config.seeds[i], nullptr, config.trainer,
                                       "seed" + std::to_string(config.seeds[i]));
    });
  }
  run_jobs(jobs, config.workers);

  const std::vector<std::string> names = rate_names_of(config);
  const int slots = config.trainer.plain_sac
                        ? 0
                        : static_cast<int>(enforced_specs(config).size()) +
                              (config.trainer.success_constraint_enabled ? 1 : 0);
  const fs::path dir(config.out_dir);
  for (const SeedOutcome& o : res.outcomes) {
    if (o.failed && o.result.metrics.empty()) continue;
    write_metrics_csv((dir / ("metrics_seed" + std::to_string(o.seed) + ".csv")).string(),
                      o.result.metrics, names, slots);
    if (slots > 0) {
      write_lambda_csv((dir / ("multipliers_seed" + std::to_string(o.seed) + ".csv")).string(),
                       o.result.lambda_trace, slots);
    }
  }
  res.summary_path = (dir / "summary.csv").string();
  write_summary_csv(res.summary_path, res.outcomes, names);
  emit_run_plots(config, res.outcomes);
  return res;
}

std::vector<GridCell> run_reward_engineering_grid(const RunConfig& config) {
  if (config.grid_names.empty()) {
    throw std::runtime_error("grid: no grid.weights.<name> lists configured");
  }
  fs::create_directories(config.out_dir);

  std::size_t n_cells = 1;
  for (const auto& w : config.grid_weights) n_cells *= w.size();

  // Penalized-reward runs are unconstrained: the grid constraints are used
  // for reporting and classification only.
  agent::TrainerConfig trainer = config.trainer;
  trainer.plain_sac = true;
  trainer.success_constraint_enabled = false;
  trainer.bootstrap_enabled = false;

  std::vector<ActiveConstraint> report_constraints;
  for (const std::string& name : config.grid_names) {
    std::optional<double> override;
    for (const ActiveConstraint& c : config.constraints) {
      if (c.name == name) override = c.spec.threshold;
    }
    report_constraints.push_back(resolve_constraint(name, override));
  }

  std::vector<GridCell> cells(n_cells);
  std::vector<std::function<void()>> jobs;
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    jobs.push_back([&, cell]() {
      GridCell& out = cells[cell];
      std::size_t rem = cell;
      for (std::size_t k = 0; k < config.grid_weights.size(); ++k) {
        out.weights.push_back(config.grid_weights[k][rem % config.grid_weights[k].size()]);
        rem /= config.grid_weights[k].size();
      }
      try {
        std::vector<PenaltyTerm> penalties;
        for (std::size_t k = 0; k < report_constraints.size(); ++k) {
          const ActiveConstraint& c = report_constraints[k];
          penalties.push_back(PenaltyTerm{c.name, c.raw_slot, c.invert, out.weights[k]});
        }
        ArenaTrainEnv env(config.arena, report_constraints, penalties);
        ArenaTrainEnv eval_env(config.arena, report_constraints, penalties);
        const std::uint64_t seed = split_seed(config.seeds[0], 9000 + cell);
        std::mt19937_64 init_rng(split_seed(seed, 77));
        agent::AgentState ag = agent::make_agent(trainer, env.obs_dim(), env.action_dim(), {},
                                                 config.success_threshold, init_rng);
        agent::TrainResult tr = agent::train(ag, env, eval_env, trainer, seed, nullptr);
        if (tr.halted) throw std::runtime_error("training halted: " + tr.halt_reason);
        // Feasibility is judged on the plain task, without the penalties.
        out.report = evaluate(ag, config.arena, report_constraints, config.grid_eval_episodes,
                              split_seed(seed, 5555));
        std::vector<ConstraintSpec> specs;
        for (const ActiveConstraint& c : report_constraints) specs.push_back(c.spec);
        out.cls = classify_feasible(out.report, specs, config.grid_performance_floor);
      } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
      }
    });
  }
  run_jobs(jobs, config.workers);

  const fs::path dir(config.out_dir);
  std::ofstream f(dir / "grid.csv", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write grid.csv");
  for (const std::string& n : config.grid_names) f << "w_" << n << ',';
  f << "return_mean,success_rate";
  for (const std::string& n : config.grid_names) f << ",rate_" << n;
  f << ",class\n";
  for (const GridCell& c : cells) {
    for (double w : c.weights) f << format_double(w) << ',';
    if (c.failed) {
      f << "nan,nan";
      for (std::size_t k = 0; k < config.grid_names.size(); ++k) f << ",nan";
      f << ",failed\n";
      continue;
    }
    f << format_double(c.report.return_mean) << ',' << format_double(c.report.success_rate);
    for (double r : c.report.rates) f << ',' << format_double(r);
    f << ',' << to_string(c.cls) << '\n';
  }
  return cells;
}

StabilityOutcome run_stability_experiment(const RunConfig& config) {
  if (config.constraints.size() != 1) {
    throw std::runtime_error("stability: configure exactly one constraint");
  }
  if (!config.constraints_enforced) {
    throw std::runtime_error("stability: constraints must be enforced");
  }
  fs::create_directories(config.out_dir);

  StabilityOutcome out;
  out.switch_step = static_cast<long>(std::llround(config.stability_switch_fraction *
                                                   static_cast<double>(config.trainer.total_steps)));
  const double impossible = config.stability_impossible_threshold;
  const double feasible = config.stability_feasible_threshold;

  agent::TrainHooks hooks;
  hooks.adjust_specs = [&](long step, std::vector<ConstraintSpec>& specs) {
    specs[0].threshold = step >= out.switch_step ? feasible : impossible;
  };

  const std::uint64_t seed = config.seeds[0];
  const std::vector<std::string> names = rate_names_of(config);
  const fs::path dir(config.out_dir);

  std::vector<agent::TrainerConfig> trainers(2, config.trainer);
  trainers[0].multiplier_mode = MultiplierMode::Normalized;
  trainers[1].multiplier_mode = MultiplierMode::Unnormalized;
  // The success constraint plays no role in this protocol.
  for (auto& t : trainers) {
    t.success_constraint_enabled = false;
    t.bootstrap_enabled = false;
    t.halt_on_nonfinite = false;  // unnormalized divergence is the phenomenon under test
  }
  std::vector<SeedOutcome> outcomes(2);
  std::vector<std::function<void()>> jobs;
  for (int mode = 0; mode < 2; ++mode) {
    jobs.push_back([&, mode]() {
      RunConfig rc = config;
      rc.constraints[0].spec.threshold = impossible;
      rc.trainer = trainers[mode];
      outcomes[mode] = train_one_seed(rc, seed, &hooks, trainers[mode],
                                      mode == 0 ? "normalized" : "unnormalized");
    });
  }
  run_jobs(jobs, config.workers);

  for (int mode = 0; mode < 2; ++mode) {
    const std::string tag = mode == 0 ? "normalized" : "unnormalized";
    write_metrics_csv((dir / ("metrics_" + tag + ".csv")).string(),
                      outcomes[mode].result.metrics, names, 1);
    write_lambda_csv((dir / ("multipliers_" + tag + ".csv")).string(),
                     outcomes[mode].result.lambda_trace, 1);
  }
  out.normalized = std::move(outcomes[0].result);
  out.unnormalized = std::move(outcomes[1].result);
  return out;
}

}  // namespace harness
}  // namespace crl
