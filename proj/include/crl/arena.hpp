#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "crl/core.hpp"

namespace crl {
namespace arena {

struct Rect {
  double x0 = 0, z0 = 0, x1 = 0, z1 = 0;
  bool contains(double x, double z) const { return x >= x0 && x <= x1 && z >= z0 && z <= z1; }
};

// Desk-scale 2D navigation arena: reach the goal tile while a set of
// per-step indicators (marker gaze, airborne, lava, speed, energy, success)
// is tracked alongside the reward.
struct ArenaConfig {
  double half_extent = 10.0;   // arena is [-half_extent, half_extent]^2
  int max_steps = 300;
  double goal_radius = 1.0;
  double marker_x = 0.0, marker_z = 0.0;
  double fov_half_angle = 0.7;  // radians; marker inside the cone counts as looked-at
  double max_speed = 0.5;       // meters per step at full command
  double max_yaw = 0.3;         // radians per step at full command
  double speed_limit = 0.4;     // strictly above this speed fires the indicator
  double energy_drain = 0.01;   // fraction per non-recharging step
  double energy_recharge = 0.05;
  double energy_floor = 0.2;    // strictly below fires the indicator
  int jump_duration = 15;       // airborne steps per jump
  std::vector<Rect> lava_rects;
  double shaping_scale = 0.1;   // reward per meter of progress toward the goal
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument on bad values
};

// Raw event slots emitted by the arena, in fixed order. The last slot is the
// success indicator.
inline constexpr int kEventNotLooking = 0;
inline constexpr int kEventNotOnGround = 1;
inline constexpr int kEventInLava = 2;
inline constexpr int kEventAboveSpeed = 3;
inline constexpr int kEventUnderEnergy = 4;
inline constexpr int kEventReachedGoal = 5;
inline constexpr int kEventCount = 6;

const std::array<std::string, kEventCount>& event_names();

struct ArenaState {
  double px = 0, pz = 0;
  double heading = 0;     // radians in [-pi, pi)
  double vx = 0, vz = 0;  // realized displacement of the last step, m/step
  double energy = 1.0;
  int airborne_remaining = 0;
  bool recharging = false;  // whether the last step recharged
  double goal_x = 0, goal_z = 0;
  int step_index = 0;
  std::array<int, kEventCount> episode_event_counts{};
  std::mt19937_64 rng;  // spawn randomness only; stepping is deterministic
};

// All components are clamped to [-1, 1] before use; jump and recharge
// trigger strictly above 0.
struct ActionCommand {
  double vx = 0, vz = 0, yaw_rate = 0, jump = 0, recharge = 0;
};

using Observation = std::vector<double>;

// Index map into the observation vector; grid entries follow at
// lava_grid_begin (5x5, row-major, 1 m spacing, world-aligned, centered on
// the agent), then the running per-episode rates of the six events, then the
// normalized remaining time.
struct ObsLayout {
  int pos_x = 0, pos_z = 1;
  int heading_cos = 2, heading_sin = 3;
  int vel_x = 4, vel_z = 5;
  int goal_rel_x = 6, goal_rel_z = 7, goal_dist = 8;
  int on_ground = 9;
  int marker_rel_x = 10, marker_rel_z = 11, marker_dist = 12;
  int looking_angle = 13, marker_in_fov = 14;
  int energy = 15, recharging = 16, in_lava = 17;
  int lava_grid_begin = 18;
  int event_rates_begin = 43;
  int remaining_time = 49;
  int dim = 50;
};
constexpr ObsLayout obs_layout() { return ObsLayout{}; }
int obs_dim(const ArenaConfig& config);

struct StepResult {
  ArenaState state;
  Observation obs;
  double reward = 0;
  bool done = false;
  bool truncated = false;
  EventVector events;
};

// Spawns agent and goal uniformly over lava-free ground with the goal at
// least two goal radii away; throws after 1000 failed placement draws.
std::pair<ArenaState, Observation> reset(const ArenaConfig& config, std::uint64_t seed);

// Advances one tick: recharge immobilizes, jump triggers only from the
// ground, velocity is the realized displacement after wall clamping.
// reward = shaping_scale * progress + 1 on reaching the goal (terminal).
StepResult step(const ArenaState& state, const ActionCommand& action, const ArenaConfig& config);

// Pure predicates on the post-step state; total on valid inputs.
EventVector events(const ArenaState& state, const ActionCommand& action,
                   const ArenaConfig& config);

// Expresses a desired behavior as an upper bound on its negation.
inline bool invert_indicator(bool flag) { return !flag; }

Observation make_observation(const ArenaState& state, const ArenaConfig& config);

// Stateful convenience wrapper around the pure transition functions.
class Arena {
 public:
  explicit Arena(ArenaConfig config);

  Observation reset(std::uint64_t seed);
  StepResult step(const ActionCommand& action);

  const ArenaState& state() const { return state_; }
  const ArenaConfig& config() const { return config_; }
  int obs_dim() const { return arena::obs_dim(config_); }
  static constexpr int kActionDim = 5;

 private:
  ArenaConfig config_;
  ArenaState state_;
};

ActionCommand to_action(const std::vector<double>& v);

}  // namespace arena
}  // namespace crl
