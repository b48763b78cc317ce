#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crl/agent.hpp"
#include "crl/arena.hpp"
#include "crl/config.hpp"
#include "crl/core.hpp"

namespace crl {
namespace harness {

// A constraint bound to one of the arena's raw event slots, optionally
// through indicator inversion (e.g. "on-ground" is the inverted
// "not-on-ground" slot).
struct ActiveConstraint {
  std::string name;
  int raw_slot = 0;
  bool invert = false;
  ConstraintSpec spec;
};

// Known constraint names with their slot bindings and default thresholds.
// Inverted aliases have no default threshold and must set one explicitly.
ActiveConstraint resolve_constraint(const std::string& name,
                                    std::optional<double> threshold_override);

// Reward penalty applied at collection time: reward' = reward - weight * e.
struct PenaltyTerm {
  std::string name;
  int raw_slot = 0;
  bool invert = false;
  double weight = 0.0;
};

// Adapts the arena to the trainer: reduces raw events to the configured
// constraint slots (success last) and applies reward penalties.
class ArenaTrainEnv : public agent::TrainEnv {
 public:
  ArenaTrainEnv(arena::ArenaConfig config, std::vector<ActiveConstraint> constraints,
                std::vector<PenaltyTerm> penalties = {});

  int obs_dim() const override { return arena_.obs_dim(); }
  int action_dim() const override { return arena::Arena::kActionDim; }
  Vec reset(std::uint64_t seed) override;
  Step step(const Vec& action) override;

  const std::vector<ActiveConstraint>& constraints() const { return constraints_; }

 private:
  arena::Arena arena_;
  std::vector<ActiveConstraint> constraints_;
  std::vector<PenaltyTerm> penalties_;
};

struct RunConfig {
  std::string name = "run";
  arena::ArenaConfig arena;
  agent::TrainerConfig trainer;
  std::vector<ActiveConstraint> constraints;
  bool constraints_enforced = true;
  double success_threshold = 0.99;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "out";
  int workers = 1;

  // stability protocol
  double stability_switch_fraction = 0.75;
  double stability_impossible_threshold = 0.0;
  double stability_feasible_threshold = 0.9;

  // reward-engineering grid protocol
  std::vector<std::string> grid_names;
  std::vector<std::vector<double>> grid_weights;
  double grid_performance_floor = 0.8;
  int grid_eval_episodes = 100;

  std::uint64_t config_hash = 0;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_config(KeyValueConfig& cfg);
};

struct EvalReport {
  double return_mean = 0;
  double success_rate = 0;         // fraction of episodes ending at the goal
  std::vector<std::string> rate_names;
  Vec rates;                       // per-constraint timestep rates
  int episodes = 0;
};

using ActFn = std::function<Vec(const Vec& obs)>;

// Deterministic-action rollouts on a fresh environment.
EvalReport evaluate(const ActFn& act, const arena::ArenaConfig& config,
                    const std::vector<ActiveConstraint>& constraints, int episodes,
                    std::uint64_t seed);
EvalReport evaluate(const agent::AgentState& agent, const arena::ArenaConfig& config,
                    const std::vector<ActiveConstraint>& constraints, int episodes,
                    std::uint64_t seed);

enum class FeasibilityClass { FeasiblePerformant, Feasible, Infeasible };
const char* to_string(FeasibilityClass c);

// Infeasible when any rate sits on the wrong side of its threshold;
// feasible-performant additionally needs success_rate >= performance_floor.
FeasibilityClass classify_feasible(const EvalReport& report,
                                   const std::vector<ConstraintSpec>& specs,
                                   double performance_floor);

// Runs independent jobs over a bounded thread pool; results are indexed by
// job, so parallelism never reorders output.
void run_jobs(const std::vector<std::function<void()>>& jobs, int workers);

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  agent::TrainResult result;
};

struct ExperimentResult {
  std::vector<SeedOutcome> outcomes;
  std::string summary_path;
};

// Trains every seed (in parallel up to config.workers), writes one metrics
// CSV and one multiplier-trace CSV per seed, a checkpoint per seed, and a
// mean/standard-error summary across the seeds that finished.
ExperimentResult run_experiment(const RunConfig& config);

struct GridCell {
  std::vector<double> weights;
  EvalReport report;
  FeasibilityClass cls = FeasibilityClass::Infeasible;
  bool failed = false;
  std::string error;
};

// Trains one unconstrained agent per weight tuple on the penalized reward,
// evaluates and classifies it, and emits one CSV row per cell.
std::vector<GridCell> run_reward_engineering_grid(const RunConfig& config);

struct StabilityOutcome {
  agent::TrainResult normalized;
  agent::TrainResult unnormalized;
  long switch_step = 0;
};

// Runs the impossible-then-feasible threshold schedule under both multiplier
// modes with identical seeds; divergence of the unnormalized mode is logged,
// not fatal.
StabilityOutcome run_stability_experiment(const RunConfig& config);

// CSV helpers shared by the runners and the CLI.
std::string format_double(double v);
void write_metrics_csv(const std::string& path, const std::vector<agent::MetricsRow>& rows,
                       const std::vector<std::string>& rate_names, int n_lambda_slots);
void write_lambda_csv(const std::string& path, const std::vector<agent::LambdaRow>& rows,
                      int n_lambda_slots);
std::string metrics_csv_string(const std::vector<agent::MetricsRow>& rows,
                               const std::vector<std::string>& rate_names, int n_lambda_slots);

}  // namespace harness
}  // namespace crl
