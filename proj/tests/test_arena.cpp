#include <doctest.h>

#include <cmath>

#include "crl/arena.hpp"
#include "crl/rng.hpp"

using namespace crl;
using namespace crl::arena;

namespace {

ArenaConfig desk_config() {
  ArenaConfig c;
  c.half_extent = 10.0;
  c.max_steps = 300;
  c.goal_radius = 1.0;
  return c;
}

ActionCommand forward_full() { return ActionCommand{1.0, 0.0, 0.0, -1.0, -1.0}; }

// Body-frame command that moves straight toward the goal at the given speed
// fraction.
ActionCommand toward_goal(const ArenaState& s, double fraction) {
  const double dx = s.goal_x - s.px, dz = s.goal_z - s.pz;
  const double d = std::hypot(dx, dz);
  if (d < 1e-12) return ActionCommand{};
  const double wx = dx / d * fraction, wz = dz / d * fraction;
  // invert the heading rotation
  const double ch = std::cos(s.heading), sh = std::sin(s.heading);
  return ActionCommand{ch * wx + sh * wz, -sh * wx + ch * wz, 0.0, -1.0, -1.0};
}

}  // namespace

TEST_SUITE("arena") {

TEST_CASE("reset is deterministic in the seed") {
  const ArenaConfig cfg = desk_config();
  auto [s1, o1] = reset(cfg, 99);
  auto [s2, o2] = reset(cfg, 99);
  CHECK(s1.px == s2.px);
  CHECK(s1.pz == s2.pz);
  CHECK(s1.heading == s2.heading);
  CHECK(s1.goal_x == s2.goal_x);
  CHECK(o1 == o2);
  auto [s3, o3] = reset(cfg, 100);
  CHECK((s1.px != s3.px || s1.pz != s3.pz));
}

TEST_CASE("spawns always succeed without lava and keep the goal separated") {
  const ArenaConfig cfg = desk_config();
  for (int seed = 0; seed < 1000; ++seed) {
    auto [s, o] = reset(cfg, seed);
    const double d = std::hypot(s.goal_x - s.px, s.goal_z - s.pz);
    CHECK(d >= 2.0 * cfg.goal_radius);
    CHECK(std::abs(s.px) <= cfg.half_extent);
    CHECK(std::abs(s.pz) <= cfg.half_extent);
    CHECK(s.energy == 1.0);
    CHECK(s.step_index == 0);
  }
}

TEST_CASE("lava-free spawning respects exclusion and unsatisfiable layouts fail") {
  ArenaConfig cfg = desk_config();
  cfg.lava_rects = {Rect{-10, -10, 10, 0}};
  for (int seed = 0; seed < 200; ++seed) {
    auto [s, o] = reset(cfg, seed);
    CHECK(s.pz > 0);
    CHECK(s.goal_z > 0);
  }
  ArenaConfig all_lava = desk_config();
  all_lava.lava_rects = {Rect{-10, -10, 10, 10}};
  CHECK_THROWS_AS(reset(all_lava, 1), std::runtime_error);
}

TEST_CASE("stepping is bit-deterministic") {
  const ArenaConfig cfg = desk_config();
  auto [s, o] = reset(cfg, 5);
  const StepResult a = step(s, forward_full(), cfg);
  const StepResult b = step(s, forward_full(), cfg);
  CHECK(a.state.px == b.state.px);
  CHECK(a.state.pz == b.state.pz);
  CHECK(a.state.heading == b.state.heading);
  CHECK(a.reward == b.reward);
  CHECK(a.obs == b.obs);
}

TEST_CASE("non-finite actions are rejected") {
  const ArenaConfig cfg = desk_config();
  auto [s, o] = reset(cfg, 5);
  ActionCommand bad = forward_full();
  bad.vz = std::nan("");
  CHECK_THROWS_AS(step(s, bad, cfg), std::invalid_argument);
}

TEST_CASE("zero-velocity action far from the goal earns zero reward") {
  const ArenaConfig cfg = desk_config();
  auto [s, o] = reset(cfg, 5);
  const StepResult r = step(s, ActionCommand{0, 0, 0, -1, -1}, cfg);
  CHECK(r.reward == doctest::Approx(0.0));
  CHECK_FALSE(r.done);
}

TEST_CASE("reaching the goal pays the terminal reward and terminates") {
  ArenaConfig cfg = desk_config();
  auto [s, o] = reset(cfg, 17);
  // Drop the agent one tick short of the goal, heading east.
  s.px = s.goal_x - cfg.goal_radius - 0.2;
  s.pz = s.goal_z;
  s.heading = 0.0;
  const StepResult r = step(s, ActionCommand{1.0, 0.0, 0.0, -1, -1}, cfg);
  CHECK(r.done);
  CHECK_FALSE(r.truncated);
  CHECK(r.events[kEventReachedGoal] == 1);
  CHECK(r.reward == doctest::Approx(1.0 + cfg.shaping_scale * (r.state.px - s.px)));
}

TEST_CASE("straight-line walk accumulates the telescoped shaping total") {
  const ArenaConfig cfg = desk_config();
  auto [s, o] = reset(cfg, 23);
  const double d0 = std::hypot(s.goal_x - s.px, s.goal_z - s.pz);
  double total_shaping = 0.0;
  ArenaState cur = s;
  bool done = false;
  for (int i = 0; i < cfg.max_steps && !done; ++i) {
    const StepResult r = step(cur, toward_goal(cur, 1.0), cfg);
    total_shaping += r.reward - (r.done ? 1.0 : 0.0);
    done = r.done;
    cur = r.state;
  }
  REQUIRE(done);
  const double dT = std::hypot(cur.goal_x - cur.px, cur.goal_z - cur.pz);
  CHECK(total_shaping == doctest::Approx(cfg.shaping_scale * (d0 - dT)).epsilon(1e-9));
  CHECK(dT <= cfg.goal_radius);
}

TEST_CASE("episodes truncate at the step limit without terminal reward") {
  ArenaConfig cfg = desk_config();
  cfg.max_steps = 5;
  auto [s, o] = reset(cfg, 3);
  ArenaState cur = s;
  StepResult r;
  for (int i = 0; i < 5; ++i) {
    r = step(cur, ActionCommand{0, 0, 0.5, -1, -1}, cfg);
    cur = r.state;
  }
  CHECK(r.truncated);
  CHECK_FALSE(r.done);
  CHECK(cur.step_index == 5);
}

TEST_CASE("energy drains linearly and recharging restores while immobilizing") {
  const ArenaConfig cfg = desk_config();
  auto [s, o] = reset(cfg, 8);
  ArenaState cur = s;
  for (int n = 1; n <= 30; ++n) {
    cur = step(cur, forward_full(), cfg).state;
    CHECK(cur.energy == doctest::Approx(std::max(0.0, 1.0 - n * cfg.energy_drain)));
  }
  const double before = cur.energy;
  const double px = cur.px, pz = cur.pz;
  const StepResult r = step(cur, ActionCommand{1.0, 1.0, 0.0, -1, 1.0}, cfg);
  CHECK(r.state.px == px);  // recharging immobilizes
  CHECK(r.state.pz == pz);
  CHECK(r.state.energy == doctest::Approx(std::min(1.0, before + cfg.energy_recharge)));
  CHECK(r.state.vx == 0.0);
  CHECK(r.events[kEventAboveSpeed] == 0);
}

TEST_CASE("energy never decreases while continuously recharging in place") {
  const ArenaConfig cfg = desk_config();
  auto [s, o] = reset(cfg, 8);
  ArenaState cur = s;
  cur.energy = 0.4;
  for (int i = 0; i < 20; ++i) {
    const double before = cur.energy;
    cur = step(cur, ActionCommand{0, 0, 0, -1, 1.0}, cfg).state;
    CHECK(cur.energy >= before);
  }
  CHECK(cur.energy == 1.0);
}

TEST_CASE("jump arc: trigger from ground, no re-trigger while airborne, one grounded tick") {
  ArenaConfig cfg = desk_config();
  cfg.jump_duration = 4;
  auto [s, o] = reset(cfg, 4);
  ArenaState cur = s;
  const ActionCommand jump{0, 0, 0, 1.0, -1};
  StepResult r = step(cur, jump, cfg);
  CHECK(r.state.airborne_remaining == 4);
  CHECK(r.events[kEventNotOnGround] == 1);
  cur = r.state;
  for (int i = 0; i < 4; ++i) {
    r = step(cur, jump, cfg);
    cur = r.state;
    CHECK(cur.airborne_remaining == 3 - i);
  }
  CHECK(r.events[kEventNotOnGround] == 0);  // landing tick touches the ground
  r = step(cur, jump, cfg);                 // and only then can it jump again
  CHECK(r.state.airborne_remaining == 4);
}

TEST_CASE("airborne agents fly over lava safely") {
  ArenaConfig cfg = desk_config();
  cfg.lava_rects = {Rect{-2, -2, 2, 2}};
  auto [s, o] = reset(cfg, 12);
  ArenaState cur = s;
  cur.px = 0.0;
  cur.pz = 0.0;
  cur.airborne_remaining = 3;
  const EventVector e = events(cur, ActionCommand{}, cfg);
  CHECK(e[kEventInLava] == 0);
  CHECK(e[kEventNotOnGround] == 1);
  cur.airborne_remaining = 0;
  const EventVector e2 = events(cur, ActionCommand{}, cfg);
  CHECK(e2[kEventInLava] == 1);
}

TEST_CASE("marker gaze events follow the cone geometry") {
  ArenaConfig cfg = desk_config();
  cfg.marker_x = 5.0;
  cfg.marker_z = 0.0;
  auto [s, o] = reset(cfg, 2);
  ArenaState cur = s;
  cur.px = 0.0;
  cur.pz = 0.0;
  cur.heading = 0.0;  // staring straight at the marker
  CHECK(events(cur, ActionCommand{}, cfg)[kEventNotLooking] == 0);
  cur.heading = cfg.fov_half_angle - 1e-9;
  CHECK(events(cur, ActionCommand{}, cfg)[kEventNotLooking] == 0);
  cur.heading = cfg.fov_half_angle + 1e-6;
  CHECK(events(cur, ActionCommand{}, cfg)[kEventNotLooking] == 1);
  cur.heading = 3.0;  // looking away
  CHECK(events(cur, ActionCommand{}, cfg)[kEventNotLooking] == 1);
}

TEST_CASE("speed indicator uses a strict inequality at the limit") {
  ArenaConfig cfg = desk_config();
  auto [s, o] = reset(cfg, 2);
  ArenaState cur = s;
  cur.vx = cfg.speed_limit;
  cur.vz = 0.0;
  CHECK(events(cur, ActionCommand{}, cfg)[kEventAboveSpeed] == 0);
  cur.vx = cfg.speed_limit + 1e-9;
  CHECK(events(cur, ActionCommand{}, cfg)[kEventAboveSpeed] == 1);
}

TEST_CASE("energy indicator fires strictly below the floor") {
  ArenaConfig cfg = desk_config();
  auto [s, o] = reset(cfg, 2);
  ArenaState cur = s;
  cur.energy = cfg.energy_floor;
  CHECK(events(cur, ActionCommand{}, cfg)[kEventUnderEnergy] == 0);
  cur.energy = cfg.energy_floor - 1e-9;
  CHECK(events(cur, ActionCommand{}, cfg)[kEventUnderEnergy] == 1);
}

TEST_CASE("step events equal a standalone events call on the post state") {
  const ArenaConfig cfg = desk_config();
  auto [s, o] = reset(cfg, 31);
  ArenaState cur = s;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    ActionCommand a{rand_range(rng, -1, 1), rand_range(rng, -1, 1), rand_range(rng, -1, 1),
                    rand_range(rng, -1, 1), rand_range(rng, -1, 1)};
    const StepResult r = step(cur, a, cfg);
    CHECK(r.events == events(r.state, a, cfg));
    cur = r.state;
    if (r.done || r.truncated) break;
  }
}

TEST_CASE("indicator inversion is an involution") {
  CHECK(invert_indicator(true) == false);
  CHECK(invert_indicator(false) == true);
  CHECK(invert_indicator(invert_indicator(true)) == true);
}

TEST_CASE("observation layout stays normalized and finite") {
  ArenaConfig cfg = desk_config();
  cfg.lava_rects = {Rect{-4, -4, -1, -1}};
  const ObsLayout L = obs_layout();
  CHECK(obs_dim(cfg) == L.dim);
  auto [s, o] = reset(cfg, 9);
  ArenaState cur = s;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    ActionCommand a{rand_range(rng, -1, 1), rand_range(rng, -1, 1), rand_range(rng, -1, 1),
                    rand_range(rng, -1, 1), rand_range(rng, -1, 1)};
    const StepResult r = step(cur, a, cfg);
    REQUIRE(static_cast<int>(r.obs.size()) == L.dim);
    for (double v : r.obs) CHECK(std::isfinite(v));
    CHECK(std::abs(r.obs[L.pos_x]) <= 1.0);
    CHECK(std::abs(r.obs[L.pos_z]) <= 1.0);
    CHECK(r.obs[L.energy] >= 0.0);
    CHECK(r.obs[L.energy] <= 1.0);
    CHECK(r.obs[L.looking_angle] >= 0.0);
    CHECK(r.obs[L.looking_angle] <= 1.0);
    CHECK(r.obs[L.remaining_time] >= 0.0);
    CHECK(r.obs[L.remaining_time] <= 1.0);
    for (int g = 0; g < 25; ++g) {
      const double v = r.obs[L.lava_grid_begin + g];
      CHECK((v == 0.0 || v == 1.0));
    }
    for (int k = 0; k < kEventCount; ++k) {
      const double v = r.obs[L.event_rates_begin + k];
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    cur = r.state;
    if (r.done || r.truncated) break;
  }
}

TEST_CASE("bad configurations are rejected") {
  ArenaConfig cfg = desk_config();
  cfg.goal_radius = 20.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = desk_config();
  cfg.lava_rects = {Rect{-11, 0, 0, 1}};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = desk_config();
  cfg.lava_rects = {Rect{1, 1, 1, 2}};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = desk_config();
  cfg.energy_drain = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("wrapper drives the pure functions") {
  Arena env(desk_config());
  const Observation o = env.reset(44);
  CHECK(static_cast<int>(o.size()) == env.obs_dim());
  const StepResult r = env.step(ActionCommand{0.5, 0, 0, -1, -1});
  CHECK(env.state().step_index == 1);
  CHECK(r.state.step_index == 1);
  CHECK_THROWS_AS(arena::to_action({0.0, 0.0}), std::invalid_argument);
}

}  // TEST_SUITE
