#include "crl/arena.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crl/rng.hpp"

namespace crl {
namespace arena {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kSpawnRetries = 1000;

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

double wrap_angle(double a) {
  while (a >= kPi) a -= 2.0 * kPi;
  while (a < -kPi) a += 2.0 * kPi;
  return a;
}

bool in_lava_at(const ArenaConfig& cfg, double x, double z) {
  for (const Rect& r : cfg.lava_rects) {
    if (r.contains(x, z)) return true;
  }
  return false;
}

// Angle between the heading direction and the marker, in [0, pi]. The agent
// standing on the marker counts as looking at it.
double looking_angle(const ArenaState& s, const ArenaConfig& cfg) {
  const double dx = cfg.marker_x - s.px, dz = cfg.marker_z - s.pz;
  const double dist = std::hypot(dx, dz);
  if (dist < 1e-12) return 0.0;
  const double target = std::atan2(dz, dx);
  return std::abs(wrap_angle(target - s.heading));
}

double goal_distance(const ArenaState& s) {
  return std::hypot(s.goal_x - s.px, s.goal_z - s.pz);
}

}  // namespace

void ArenaConfig::validate() const {
  if (half_extent <= 0) throw std::invalid_argument("arena: half_extent must be positive");
  if (max_steps <= 0) throw std::invalid_argument("arena: max_steps must be positive");
  if (goal_radius <= 0 || goal_radius >= half_extent) {
    throw std::invalid_argument("arena: goal_radius must lie in (0, half_extent)");
  }
  if (fov_half_angle <= 0 || fov_half_angle >= kPi) {
    throw std::invalid_argument("arena: fov_half_angle must lie in (0, pi)");
  }
  if (energy_drain <= 0 || energy_drain > 1 || energy_recharge <= 0 || energy_recharge > 1) {
    throw std::invalid_argument("arena: energy drain/recharge must lie in (0, 1]");
  }
  if (energy_floor < 0 || energy_floor > 1) {
    throw std::invalid_argument("arena: energy_floor must lie in [0, 1]");
  }
  if (max_speed <= 0 || max_yaw <= 0 || speed_limit < 0) {
    throw std::invalid_argument("arena: speed parameters must be positive");
  }
  if (jump_duration < 0) throw std::invalid_argument("arena: jump_duration must be >= 0");
  for (const Rect& r : lava_rects) {
    if (r.x0 >= r.x1 || r.z0 >= r.z1) throw std::invalid_argument("arena: degenerate lava rect");
    if (r.x0 < -half_extent || r.x1 > half_extent || r.z0 < -half_extent || r.z1 > half_extent) {
      throw std::invalid_argument("arena: lava rect outside the arena");
    }
  }
}

const std::array<std::string, kEventCount>& event_names() {
  static const std::array<std::string, kEventCount> names = {
      "not-looking", "not-on-ground", "in-lava", "above-speed", "under-energy", "reached-goal"};
  return names;
}

int obs_dim(const ArenaConfig&) { return obs_layout().dim; }

EventVector events(const ArenaState& s, const ActionCommand&, const ArenaConfig& cfg) {
  EventVector e(kEventCount, 0);
  const bool on_ground = s.airborne_remaining == 0;
  e[kEventNotLooking] = looking_angle(s, cfg) > cfg.fov_half_angle ? 1 : 0;
  e[kEventNotOnGround] = on_ground ? 0 : 1;
  e[kEventInLava] = (on_ground && in_lava_at(cfg, s.px, s.pz)) ? 1 : 0;
  e[kEventAboveSpeed] = std::hypot(s.vx, s.vz) > cfg.speed_limit ? 1 : 0;
  e[kEventUnderEnergy] = s.energy < cfg.energy_floor ? 1 : 0;
  e[kEventReachedGoal] = goal_distance(s) <= cfg.goal_radius ? 1 : 0;
  return e;
}

Observation make_observation(const ArenaState& s, const ArenaConfig& cfg) {
  const ObsLayout L = obs_layout();
  Observation o(L.dim, 0.0);
  const double he = cfg.half_extent;
  const double diag = 2.0 * std::sqrt(2.0) * he;
  o[L.pos_x] = s.px / he;
  o[L.pos_z] = s.pz / he;
  o[L.heading_cos] = std::cos(s.heading);
  o[L.heading_sin] = std::sin(s.heading);
  o[L.vel_x] = s.vx / cfg.max_speed;
  o[L.vel_z] = s.vz / cfg.max_speed;
  o[L.goal_rel_x] = (s.goal_x - s.px) / (2.0 * he);
  o[L.goal_rel_z] = (s.goal_z - s.pz) / (2.0 * he);
  o[L.goal_dist] = goal_distance(s) / diag;
  o[L.on_ground] = s.airborne_remaining == 0 ? 1.0 : 0.0;
  o[L.marker_rel_x] = (cfg.marker_x - s.px) / (2.0 * he);
  o[L.marker_rel_z] = (cfg.marker_z - s.pz) / (2.0 * he);
  o[L.marker_dist] = std::hypot(cfg.marker_x - s.px, cfg.marker_z - s.pz) / diag;
  const double ang = looking_angle(s, cfg);
  o[L.looking_angle] = ang / kPi;
  o[L.marker_in_fov] = ang <= cfg.fov_half_angle ? 1.0 : 0.0;
  o[L.energy] = s.energy;
  o[L.recharging] = s.recharging ? 1.0 : 0.0;
  o[L.in_lava] = (s.airborne_remaining == 0 && in_lava_at(cfg, s.px, s.pz)) ? 1.0 : 0.0;
  // 5x5 probe of the surrounding ground, 1 m spacing.
  int idx = L.lava_grid_begin;
  for (int gz = -2; gz <= 2; ++gz) {
    for (int gx = -2; gx <= 2; ++gx) {
      o[idx++] = in_lava_at(cfg, s.px + gx, s.pz + gz) ? 1.0 : 0.0;
    }
  }
  const int steps = std::max(1, s.step_index);
  for (int k = 0; k < kEventCount; ++k) {
    o[L.event_rates_begin + k] =
        static_cast<double>(s.episode_event_counts[k]) / static_cast<double>(steps);
  }
  o[L.remaining_time] =
      static_cast<double>(cfg.max_steps - s.step_index) / static_cast<double>(cfg.max_steps);
  return o;
}

std::pair<ArenaState, Observation> reset(const ArenaConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ArenaState s;
  s.rng = std::mt19937_64(seed);
  const double he = cfg.half_extent;

  bool placed = false;
  for (int tries = 0; tries < kSpawnRetries; ++tries) {
    const double x = rand_range(s.rng, -he, he);
    const double z = rand_range(s.rng, -he, he);
    if (!in_lava_at(cfg, x, z)) {
      s.px = x;
      s.pz = z;
      placed = true;
      break;
    }
  }
  if (!placed) throw std::runtime_error("arena: could not place agent outside lava");

  s.heading = rand_range(s.rng, -kPi, kPi);

  placed = false;
  for (int tries = 0; tries < kSpawnRetries; ++tries) {
    const double x = rand_range(s.rng, -he, he);
    const double z = rand_range(s.rng, -he, he);
    if (in_lava_at(cfg, x, z)) continue;
    if (std::hypot(x - s.px, z - s.pz) < 2.0 * cfg.goal_radius) continue;
    s.goal_x = x;
    s.goal_z = z;
    placed = true;
    break;
  }
  if (!placed) throw std::runtime_error("arena: could not place goal outside lava");

  s.energy = 1.0;
  s.airborne_remaining = 0;
  s.recharging = false;
  s.vx = s.vz = 0.0;
  s.step_index = 0;
  s.episode_event_counts.fill(0);
  return {s, make_observation(s, cfg)};
}

StepResult step(const ArenaState& state, const ActionCommand& action, const ArenaConfig& cfg) {
  if (!std::isfinite(action.vx) || !std::isfinite(action.vz) || !std::isfinite(action.yaw_rate) ||
      !std::isfinite(action.jump) || !std::isfinite(action.recharge)) {
    throw std::invalid_argument("arena: non-finite action component");
  }

  StepResult r;
  r.state = state;
  ArenaState& s = r.state;
  const double prev_goal_dist = goal_distance(state);

  const double a_vx = clamp_unit(action.vx);
  const double a_vz = clamp_unit(action.vz);
  const double a_yaw = clamp_unit(action.yaw_rate);
  const bool recharge_cmd = clamp_unit(action.recharge) > 0.0;
  const bool jump_cmd = clamp_unit(action.jump) > 0.0;

  const bool grounded_at_start = s.airborne_remaining == 0;
  s.recharging = recharge_cmd;

  // Jump only triggers from the ground and recharging takes precedence; a
  // fresh jump keeps its full duration this tick, otherwise airborne time
  // burns down by one.
  if (jump_cmd && grounded_at_start && !recharge_cmd) {
    s.airborne_remaining = cfg.jump_duration;
  } else if (s.airborne_remaining > 0) {
    s.airborne_remaining -= 1;
  }

  if (recharge_cmd) {
    s.vx = 0.0;
    s.vz = 0.0;
    s.energy = std::min(1.0, s.energy + cfg.energy_recharge);
  } else {
    // Body-frame command rotated into the world frame, speed capped.
    double cx = a_vx, cz = a_vz;
    const double norm = std::hypot(cx, cz);
    if (norm > 1.0) {
      cx /= norm;
      cz /= norm;
    }
    const double ch = std::cos(s.heading), sh = std::sin(s.heading);
    const double wx = (ch * cx - sh * cz) * cfg.max_speed;
    const double wz = (sh * cx + ch * cz) * cfg.max_speed;
    const double nx = std::clamp(s.px + wx, -cfg.half_extent, cfg.half_extent);
    const double nz = std::clamp(s.pz + wz, -cfg.half_extent, cfg.half_extent);
    s.vx = nx - s.px;
    s.vz = nz - s.pz;
    s.px = nx;
    s.pz = nz;
    s.energy = std::max(0.0, s.energy - cfg.energy_drain);
  }
  s.heading = wrap_angle(s.heading + a_yaw * cfg.max_yaw);
  s.step_index += 1;

  const double new_goal_dist = goal_distance(s);
  r.done = new_goal_dist <= cfg.goal_radius;
  r.truncated = !r.done && s.step_index >= cfg.max_steps;
  r.reward = cfg.shaping_scale * (prev_goal_dist - new_goal_dist) + (r.done ? 1.0 : 0.0);

  r.events = events(s, action, cfg);
  for (int k = 0; k < kEventCount; ++k) s.episode_event_counts[k] += r.events[k];
  r.obs = make_observation(s, cfg);
  return r;
}

Arena::Arena(ArenaConfig config) : config_(std::move(config)) {
  config_.validate();
}

Observation Arena::reset(std::uint64_t seed) {
  auto [s, o] = arena::reset(config_, seed);
  state_ = std::move(s);
  return o;
}

StepResult Arena::step(const ActionCommand& action) {
  StepResult r = arena::step(state_, action, config_);
  state_ = r.state;
  return r;
}

ActionCommand to_action(const std::vector<double>& v) {
  if (v.size() != 5) throw std::invalid_argument("arena: action vector must have 5 components");
  return ActionCommand{v[0], v[1], v[2], v[3], v[4]};
}

}  // namespace arena
}  // namespace crl
