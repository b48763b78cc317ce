#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "crl/agent.hpp"
#include "crl/harness.hpp"
#include "crl/oracle.hpp"
#include "crl/rng.hpp"

namespace {

using namespace crl;

harness::RunConfig load_run_config(const std::string& config_path, const std::string& out_dir,
                                   const std::vector<std::uint64_t>& seeds, int workers) {
  harness::RunConfig rc = harness::RunConfig::from_file(config_path);
  if (!out_dir.empty()) rc.out_dir = out_dir;
  if (!seeds.empty()) rc.seeds = seeds;
  if (workers > 0) rc.workers = workers;
  return rc;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::uint64_t>& seeds, int workers) {
  const harness::RunConfig rc = load_run_config(config_path, out_dir, seeds, workers);
  const harness::ExperimentResult res = harness::run_experiment(rc);
  int failed = 0;
  for (const harness::SeedOutcome& o : res.outcomes) {
    if (o.failed) {
      ++failed;
      std::cerr << "seed " << o.seed << " failed: " << o.error << "\n";
      continue;
    }
    const auto& m = o.result.metrics;
    std::cout << "seed " << o.seed << ": " << m.size() << " eval points";
    if (!m.empty()) {
      std::cout << ", final return " << m.back().return_mean << ", final success "
                << m.back().success_rate;
    }
    std::cout << "\n";
  }
  std::cout << "summary: " << res.summary_path << "\n";
  return failed == static_cast<int>(res.outcomes.size()) ? 1 : 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint, int episodes,
             std::uint64_t seed) {
  const harness::RunConfig rc = harness::RunConfig::from_file(config_path);
  std::ifstream f(checkpoint, std::ios::binary);
  if (!f) {
    std::cerr << "cannot open checkpoint: " << checkpoint << "\n";
    return 1;
  }
  long step = 0;
  std::uint64_t hash = 0;
  const agent::AgentState ag = agent::load_agent(f, &hash, &step);
  if (hash != rc.config_hash) {
    std::cerr << "note: checkpoint config hash differs from the given config\n";
  }
  const harness::EvalReport rep =
      harness::evaluate(ag, rc.arena, rc.constraints, episodes, seed);
  std::cout << "checkpoint step: " << step << "\n"
            << "episodes: " << rep.episodes << "\n"
            << "return_mean: " << rep.return_mean << "\n"
            << "success_rate: " << rep.success_rate << "\n";
  for (std::size_t k = 0; k < rep.rate_names.size(); ++k) {
    std::cout << "rate_" << rep.rate_names[k] << ": " << rep.rates[k] << "\n";
  }
  return 0;
}

int cmd_grid(const std::string& config_path, const std::string& out_dir,
             const std::vector<std::uint64_t>& seeds, int workers) {
  const harness::RunConfig rc = load_run_config(config_path, out_dir, seeds, workers);
  const auto cells = harness::run_reward_engineering_grid(rc);
  int feasible_performant = 0, failed = 0;
  for (const harness::GridCell& c : cells) {
    if (c.failed) {
      ++failed;
      continue;
    }
    if (c.cls == harness::FeasibilityClass::FeasiblePerformant) ++feasible_performant;
  }
  std::cout << cells.size() << " cells, " << feasible_performant << " feasible-performant, "
            << failed << " failed\n"
            << "grid csv: " << rc.out_dir << "/grid.csv\n";
  return 0;
}

int cmd_stability(const std::string& config_path, const std::string& out_dir,
                  const std::vector<std::uint64_t>& seeds, int workers,
                  double switch_fraction) {
  harness::RunConfig rc = load_run_config(config_path, out_dir, seeds, workers);
  if (switch_fraction > 0) rc.stability_switch_fraction = switch_fraction;
  const harness::StabilityOutcome out = harness::run_stability_experiment(rc);
  auto peak = [](const std::vector<agent::LambdaRow>& trace) {
    double m = 0;
    for (const auto& r : trace) {
      for (double l : r.lambdas) m = std::max(m, l);
    }
    return m;
  };
  std::cout << "switch step: " << out.switch_step << "\n"
            << "normalized peak lambda: " << peak(out.normalized.lambda_trace) << "\n"
            << "unnormalized peak lambda: " << peak(out.unnormalized.lambda_trace) << "\n"
            << "unnormalized diverged: " << (out.unnormalized.diverged ? "yes" : "no") << "\n";
  return 0;
}

int cmd_oracle(const std::string& instance_path, int grid_points, double grid_max,
               long gda_steps, const std::string& gda_mode) {
  std::ifstream f(instance_path);
  if (!f) {
    std::cerr << "cannot open instance: " << instance_path << "\n";
    return 1;
  }
  const oracle::TabularCMDP m = oracle::load_cmdp(f);
  std::cout << "cmdp: " << m.n_states << " states, " << m.n_actions << " actions, " << m.n_costs
            << " constraints, gamma " << m.gamma << "\n";

  std::vector<Vec> grid(m.n_costs);
  for (int k = 0; k < m.n_costs; ++k) {
    for (int i = 0; i < grid_points; ++i) {
      grid[k].push_back(grid_max * i / std::max(1, grid_points - 1));
    }
  }
  const oracle::DualResult dual = oracle::dual_minimize(m, grid);
  std::cout << "dual value: " << dual.dual_value << "\nlambda*:";
  for (double l : dual.lambda_star) std::cout << ' ' << l;
  std::cout << "\n";
  if (dual.found_feasible) {
    std::cout << "best feasible return: " << dual.best_feasible_return << "\n";
  } else {
    std::cout << "no feasible best response on the grid\n";
  }

  oracle::GdaOptions opt;
  opt.steps = gda_steps;
  opt.mode = gda_mode == "normalized" ? MultiplierMode::Normalized : MultiplierMode::Unnormalized;
  const oracle::GdaResult gda = oracle::gda_reference(m, opt);
  const oracle::GdaPoint& last = gda.trace.back();
  std::cout << "gda (" << gda_mode << ", " << gda_steps << " steps): return "
            << last.return_value << ", costs:";
  for (double c : last.costs) std::cout << ' ' << c;
  std::cout << ", lambda:";
  for (double l : last.lambda) std::cout << ' ' << l;
  std::cout << (gda.diverged ? " [diverged]" : "") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained RL toolkit: indicator-cost SAC/TD3-Lagrangian with softmax "
               "multipliers, a desk-scale arena, and an exact tabular-CMDP oracle"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, instance_path, gda_mode = "unnormalized";
  std::vector<std::uint64_t> seeds;
  int workers = 0, episodes = 100, grid_points = 21;
  long gda_steps = 20000;
  double switch_fraction = 0, grid_max = 20.0;
  std::uint64_t seed = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration file")->required();
    cmd->add_option("--out", out_dir, "output directory (overrides config)");
    cmd->add_option("--seeds", seeds, "seed list (overrides config)")->delimiter(',');
    cmd->add_option("--workers", workers, "parallel jobs");
  };

  CLI::App* train = app.add_subcommand("train", "train one agent per seed and emit metrics CSVs");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", config_path, "run configuration file")->required();
  eval->add_option("--checkpoint", checkpoint, "agent checkpoint file")->required();
  eval->add_option("--episodes", episodes, "evaluation episodes");
  eval->add_option("--seed", seed, "evaluation seed");

  CLI::App* grid = app.add_subcommand("grid", "reward-engineering penalty-weight grid search");
  add_common(grid);

  CLI::App* stability =
      app.add_subcommand("stability", "impossible-then-feasible multiplier stability run");
  add_common(stability);
  stability->add_option("--switch-fraction", switch_fraction,
                        "fraction of total steps before the threshold switch");

  CLI::App* oracle_cmd = app.add_subcommand("oracle", "exact tabular-CMDP dual oracle and GDA");
  oracle_cmd->add_option("--instance", instance_path, "cmdp instance file")->required();
  oracle_cmd->add_option("--grid-points", grid_points, "lambda grid resolution per constraint");
  oracle_cmd->add_option("--grid-max", grid_max, "largest lambda on the grid");
  oracle_cmd->add_option("--gda-steps", gda_steps, "gradient ascent-descent iterations");
  oracle_cmd->add_option("--gda-mode", gda_mode, "unnormalized|normalized");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, out_dir, seeds, workers);
    if (eval->parsed()) return cmd_eval(config_path, checkpoint, episodes, seed);
    if (grid->parsed()) return cmd_grid(config_path, out_dir, seeds, workers);
    if (stability->parsed()) {
      return cmd_stability(config_path, out_dir, seeds, workers, switch_fraction);
    }
    if (oracle_cmd->parsed()) {
      return cmd_oracle(instance_path, grid_points, grid_max, gda_steps, gda_mode);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
