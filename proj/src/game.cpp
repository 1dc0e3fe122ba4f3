#include "hcsp/game.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hcsp::game {

namespace {

constexpr double kGravityZ = -9.81;
constexpr int kBallSubsteps = 4;  // limits contact tunneling at high speeds

Vec3 rotate_half_turn(const Vec3& v) { return {-v.x, -v.y, v.z}; }

Vec3 root_position(const DroneRootState& r) { return {r[0], r[1], r[2]}; }
Vec3 root_velocity(const DroneRootState& r) { return {r[7], r[8], r[9]}; }
Vec3 root_up(const DroneRootState& r) { return {r[16], r[17], r[18]}; }

}  // namespace

DroneRootState GameState::drone_root(int i, DynamicsBackend backend) const {
  if (backend == DynamicsBackend::Quadrotor)
    return dyn::root_state_vector(drones[i].body, drones[i].last_cmd);
  return dyn::kinematic_root_state(drones[i].kin);
}

Vec3 GameState::drone_position(int i, DynamicsBackend backend) const {
  return backend == DynamicsBackend::Quadrotor ? drones[i].body.position
                                               : drones[i].kin.position;
}

Vec3 GameState::drone_velocity(int i, DynamicsBackend backend) const {
  return backend == DynamicsBackend::Quadrotor ? drones[i].body.linear_velocity
                                               : drones[i].kin.velocity;
}

Vec3 GameState::drone_up(int i, DynamicsBackend backend) const {
  return backend == DynamicsBackend::Quadrotor ? drones[i].body.attitude.up()
                                               : Vec3{0.0, 0.0, 1.0};
}

GameState reset(const EnvOptions& options, std::uint64_t seed,
                std::optional<Team> serving_team) {
  Rng rng(seed);
  GameState s;
  s.rng_state = seed;
  s.serving_team =
      serving_team ? *serving_team
                   : (rng.below(2) == 0 ? Team::Team1 : Team::Team2);
  s.ball_side = s.serving_team;
  s.phase = Phase::Serve;

  double lo = options.restitution_range[0];
  double hi = options.restitution_range[1];
  s.ball.restitution = lo == hi ? lo : rng.uniform(lo, hi);

  // Ball drops from 5 m above the serving baseline midpoint.
  Vec3 drop{side_sign(s.serving_team) * options.court.half_length, 0.0, 5.0};
  if (options.init_noise_scale > 0.0) {
    drop.x += rng.uniform(-options.init_noise_scale, options.init_noise_scale);
    drop.y += rng.uniform(-options.init_noise_scale, options.init_noise_scale);
  }
  s.ball.position = drop;
  s.ball.velocity = Vec3{};

  for (int d = 0; d < 6; ++d) {
    Team t = team_of_drone(d);
    int role = d % 3;
    bool serving = t == s.serving_team;
    Vec3 home = serving ? options.formation.serving[role]
                        : options.formation.receiving[role];
    if (t == Team::Team2) home = rotate_half_turn(home);
    s.drones[d].kin = KinematicDroneState{home, Vec3{}};
    s.drones[d].body = RigidBodyState{home, UnitQuaternion::identity(), Vec3{},
                                      Vec3{}};
    s.drones[d].last_cmd = RotorCommand{};
  }
  return s;
}

std::optional<BallState> racket_collision(const BallState& ball,
                                          const DroneRootState& drone,
                                          const RacketSpec& racket) {
  Vec3 n = root_up(drone);
  Vec3 center = root_position(drone) + n * racket.mount_offset;
  Vec3 d = ball.position - center;
  double dn = d.dot(n);
  if (std::abs(dn) > ball.radius) return std::nullopt;
  Vec3 tangential = d - n * dn;
  if (tangential.norm() > racket.radius) return std::nullopt;

  Vec3 drone_v = root_velocity(drone);
  Vec3 rel = ball.velocity - drone_v;
  double vn = rel.dot(n);
  // Approaching the disk: normal velocity opposes the side the ball is on.
  double side = dn >= 0.0 ? 1.0 : -1.0;
  if (vn * side >= 0.0) return std::nullopt;

  BallState out = ball;
  out.velocity = drone_v + rel - (1.0 + ball.restitution) * vn * n;
  out.position = center + tangential + n * (side * ball.radius);
  return out;
}

bool high_level_trigger(const std::vector<GameEvent>& events) {
  for (const GameEvent& e : events)
    if (e.kind == GameEvent::Kind::RacketHit ||
        e.kind == GameEvent::Kind::NetCross)
      return true;
  return false;
}

Outcome rules_check(const GameState& state,
                    const std::vector<GameEvent>& events) {
  bool violated[2] = {false, false};
  bool timeout = false;
  for (const GameEvent& e : events) {
    switch (e.kind) {
      case GameEvent::Kind::DroneGround:
      case GameEvent::Kind::DroneCrossNet:
        violated[static_cast<int>(team_of_drone(e.actor))] = true;
        break;
      case GameEvent::Kind::IllegalHit:
      case GameEvent::Kind::BallOut:
      case GameEvent::Kind::NetContact:
      case GameEvent::Kind::BallGround:
        violated[e.actor] = true;
        break;
      case GameEvent::Kind::Timeout:
        timeout = true;
        break;
      default:
        break;
    }
  }
  (void)state;
  if (violated[0] && violated[1]) return Outcome::draw();
  if (violated[0]) return Outcome::win(Team::Team2);
  if (violated[1]) return Outcome::win(Team::Team1);
  if (timeout) return Outcome::draw();
  return Outcome::ongoing();
}

StepResult step(GameState& state, const std::array<DroneCommand, 6>& commands,
                const EnvOptions& options) {
  if (state.phase == Phase::Terminal)
    throw std::logic_error("step() called on a terminal GameState");

  StepResult result;
  auto emit = [&](GameEvent::Kind k, int actor) {
    result.events.push_back(GameEvent{k, actor, state.step_count});
  };

  // 1. Drones.
  for (int d = 0; d < 6; ++d) {
    if (options.backend == DynamicsBackend::Quadrotor) {
      RotorCommand cmd;
      cmd.normalized_thrusts = commands[d].values;
      cmd = cmd.clamped();
      auto [force, torque] = thrust_torque(options.quadrotor, cmd);
      state.drones[d].body = dyn::step_rigid_body(
          state.drones[d].body, force, torque, options.quadrotor, options.dt);
      state.drones[d].last_cmd = cmd;
    } else {
      Vec3 a;
      double s = 2.0 * options.kinematic.max_accel;
      a.x = (std::clamp(commands[d].values[0], 0.0, 1.0) - 0.5) * s;
      a.y = (std::clamp(commands[d].values[1], 0.0, 1.0) - 0.5) * s;
      a.z = (std::clamp(commands[d].values[2], 0.0, 1.0) - 0.5) * s;
      state.drones[d].kin =
          dyn::kinematic_step(state.drones[d].kin, a, options.kinematic,
                              options.dt);
    }
  }

  std::array<DroneRootState, 6> roots;
  for (int d = 0; d < 6; ++d)
    roots[d] = state.drone_root(d, options.backend);

  bool terminal_contact = false;  // ball hit ground or net this step
  bool grounded = false;

  // 2. Ball motion with contact resolution, in substeps.
  const double h = options.dt / kBallSubsteps;
  for (int sub = 0; sub < kBallSubsteps && !terminal_contact; ++sub) {
    Vec3 prev_pos = state.ball.position;
    // Exact ballistic update over the substep.
    state.ball.position +=
        state.ball.velocity * h + Vec3{0, 0, 0.5 * kGravityZ * h * h};
    state.ball.velocity.z += kGravityZ * h;

    // Racket contacts, nearest first; at most one per substep.
    int hit_drone = -1;
    double best_dist = 0.0;
    BallState hit_ball;
    for (int d = 0; d < 6; ++d) {
      auto contact = racket_collision(state.ball, roots[d], options.racket);
      if (!contact) continue;
      double dist = (state.ball.position - root_position(roots[d])).norm();
      if (hit_drone < 0 || dist < best_dist) {
        hit_drone = d;
        best_dist = dist;
        hit_ball = *contact;
      }
    }
    if (hit_drone >= 0) {
      state.ball = hit_ball;
      Team t = team_of_drone(hit_drone);
      int ti = static_cast<int>(t);
      emit(GameEvent::Kind::RacketHit, hit_drone);
      bool illegal = state.ball_side != t ||
                     (state.last_hitter && *state.last_hitter == hit_drone) ||
                     state.team_hit_counts[ti] >= 3;
      if (illegal) emit(GameEvent::Kind::IllegalHit, ti);
      if (state.team_hit_counts[ti] < 3) state.team_hit_counts[ti]++;
      state.hit_flags[hit_drone] = true;
      state.last_hitter = hit_drone;
      state.last_touch_team = t;
      if (state.phase == Phase::Serve) state.phase = Phase::Rally;
    }

    // Net plane crossing.
    if (prev_pos.x * state.ball.position.x < 0.0) {
      double f = prev_pos.x / (prev_pos.x - state.ball.position.x);
      Vec3 cross = prev_pos + (state.ball.position - prev_pos) * f;
      bool hits_net = cross.z - state.ball.radius <= options.court.net_height &&
                      std::abs(cross.y) <= options.court.half_width;
      if (hits_net) {
        Team responsible = state.last_touch_team.value_or(state.serving_team);
        emit(GameEvent::Kind::NetContact, static_cast<int>(responsible));
        terminal_contact = true;
      } else {
        int direction = state.ball.position.x < 0.0 ? 0 : 1;
        emit(GameEvent::Kind::NetCross, direction);
        state.team_hit_counts = {0, 0};
        state.hit_flags = {};
        state.last_hitter.reset();
        state.ball_side =
            state.ball.position.x < 0.0 ? Team::Team1 : Team::Team2;
      }
    }

    // Ground contact (judged at landing).
    if (state.ball.position.z - state.ball.radius <= 0.0) {
      grounded = true;
      terminal_contact = true;
    }
  }

  if (grounded) {
    Team side = state.ball.position.x < 0.0 ? Team::Team1 : Team::Team2;
    if (options.court.in_court(state.ball.position)) {
      emit(GameEvent::Kind::BallGround, static_cast<int>(side));
    } else {
      Team responsible = state.last_touch_team.value_or(state.serving_team);
      emit(GameEvent::Kind::BallOut, static_cast<int>(responsible));
    }
  }

  // 3. Drone rule checks.
  for (int d = 0; d < 6; ++d) {
    Vec3 p = root_position(roots[d]);
    if (p.z < options.drone_ground_threshold)
      emit(GameEvent::Kind::DroneGround, d);
    if (p.x * side_sign(team_of_drone(d)) < 0.0)
      emit(GameEvent::Kind::DroneCrossNet, d);
  }

  state.step_count++;
  result.outcome = rules_check(state, result.events);
  if (!result.outcome.terminal() && state.step_count >= options.max_steps) {
    emit(GameEvent::Kind::Timeout, 0);
    result.outcome = rules_check(state, result.events);
  }
  if (result.outcome.terminal()) state.phase = Phase::Terminal;
  return result;
}

}  // namespace hcsp::game
