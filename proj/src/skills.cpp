#include "hcsp/skills.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hcsp/control.hpp"

namespace hcsp::skills {

using game::DroneCommand;
using game::DynamicsBackend;
using game::EnvOptions;
using game::Team;

std::string skill_name(SkillId id) {
  switch (id) {
    case SkillId::Serve: return "serve";
    case SkillId::Receive: return "receive";
    case SkillId::Pass: return "pass";
    case SkillId::Set: return "set";
    case SkillId::Attack: return "attack";
    case SkillId::HoverServe: return "hover_serve";
    case SkillId::HoverReceive: return "hover_receive";
    case SkillId::HoverPass: return "hover_pass";
    case SkillId::HoverSet: return "hover_set";
    case SkillId::HoverAttack: return "hover_attack";
    case SkillId::GoTo: return "goto";
  }
  throw std::invalid_argument("unknown skill id");
}

SkillId skill_from_name(const std::string& name) {
  for (SkillId id :
       {SkillId::Serve, SkillId::Receive, SkillId::Pass, SkillId::Set,
        SkillId::Attack, SkillId::HoverServe, SkillId::HoverReceive,
        SkillId::HoverPass, SkillId::HoverSet, SkillId::HoverAttack,
        SkillId::GoTo}) {
    if (skill_name(id) == name) return id;
  }
  throw std::invalid_argument("unknown skill name: " + name);
}

bool is_hover(SkillId id) {
  switch (id) {
    case SkillId::HoverServe:
    case SkillId::HoverReceive:
    case SkillId::HoverPass:
    case SkillId::HoverSet:
    case SkillId::HoverAttack:
      return true;
    default:
      return false;
  }
}

bool is_ball_skill(SkillId id) {
  switch (id) {
    case SkillId::Serve:
    case SkillId::Receive:
    case SkillId::Pass:
    case SkillId::Set:
    case SkillId::Attack:
      return true;
    default:
      return false;
  }
}

SkillId hover_for(SkillId preceding) {
  switch (preceding) {
    case SkillId::Serve: return SkillId::HoverServe;
    case SkillId::Receive: return SkillId::HoverReceive;
    case SkillId::Pass: return SkillId::HoverPass;
    case SkillId::Set: return SkillId::HoverSet;
    case SkillId::Attack: return SkillId::HoverAttack;
    default:
      throw std::invalid_argument("no hover variant for this skill");
  }
}

namespace {

SkillId hover_preceding_of(SkillId id) {
  switch (id) {
    case SkillId::HoverServe: return SkillId::Serve;
    case SkillId::HoverReceive: return SkillId::Receive;
    case SkillId::HoverPass: return SkillId::Pass;
    case SkillId::HoverSet: return SkillId::Set;
    case SkillId::HoverAttack: return SkillId::Attack;
    default:
      throw std::invalid_argument("not a hover skill");
  }
}

}  // namespace

int role_of(SkillId id) {
  switch (id) {
    case SkillId::Serve:
    case SkillId::Receive:
    case SkillId::Pass:
    case SkillId::HoverServe:
    case SkillId::HoverReceive:
    case SkillId::HoverPass:
    case SkillId::GoTo:
      return 0;  // pass role
    case SkillId::Set:
    case SkillId::HoverSet:
      return 1;  // set role
    case SkillId::Attack:
    case SkillId::HoverAttack:
      return 2;  // attack role
  }
  return 0;
}

bool hit_permitted(const GameState& state, int drone) {
  Team team = game::team_of_drone(drone);
  return state.ball_side == team &&
         (!state.last_hitter || *state.last_hitter != drone) &&
         state.team_hit_counts[static_cast<int>(team)] < 3;
}

int observation_dim(SkillId id) {
  switch (id) {
    case SkillId::Serve: return 37;
    case SkillId::Receive:
    case SkillId::Set: return 34;
    case SkillId::Attack:
    case SkillId::Pass: return 36;
    default: return 26;  // hover / goto
  }
}

std::vector<double> build_observation(SkillId skill,
                                      const game::DroneRootState& drone,
                                      const game::BallState& ball,
                                      const TacticalParams& tactical,
                                      bool hit_permission) {
  std::vector<double> obs;
  obs.reserve(observation_dim(skill));
  Vec3 pos{drone[0], drone[1], drone[2]};

  if (is_ball_skill(skill)) {
    obs.insert(obs.end(), drone.begin(), drone.end());  // root state, 23
    obs.insert(obs.end(), {ball.position.x, ball.position.y, ball.position.z});
    Vec3 rel = ball.position - pos;
    obs.insert(obs.end(), {rel.x, rel.y, rel.z});
    obs.insert(obs.end(), {ball.velocity.x, ball.velocity.y, ball.velocity.z});
    obs.push_back(hit_permission ? 1.0 : 0.0);
    obs.push_back(hit_permission ? 0.0 : 1.0);
    if (skill == SkillId::Serve) {
      Vec3 t = tactical.serve_target - pos;
      obs.insert(obs.end(), {t.x, t.y, t.z});
    } else if (skill == SkillId::Attack) {
      obs.push_back(tactical.attack_direction == 0 ? 1.0 : 0.0);
      obs.push_back(tactical.attack_direction == 1 ? 1.0 : 0.0);
    } else if (skill == SkillId::Pass) {
      obs.push_back(tactical.pass_side == 0 ? 1.0 : 0.0);
      obs.push_back(tactical.pass_side == 1 ? 1.0 : 0.0);
    }
  } else {
    // Hover / goto: target-relative position, the non-position root state,
    // and the tilt error of the up vector.
    Vec3 t = tactical.goto_target - pos;
    obs.insert(obs.end(), {t.x, t.y, t.z});
    obs.insert(obs.end(), drone.begin() + 3, drone.end());  // 20
    obs.insert(obs.end(), {drone[16], drone[17], drone[18] - 1.0});
  }
  if (static_cast<int>(obs.size()) != observation_dim(skill))
    throw std::logic_error("observation size mismatch");
  return obs;
}

// ---------------------------------------------------------------------------
// Reward terms

namespace {

using Ctx = SkillStepContext;

Vec3 trainee_pos(const Ctx& c) {
  return c.cur->drone_position(c.trainee, c.backend);
}
Vec3 trainee_vel(const Ctx& c) {
  return c.cur->drone_velocity(c.trainee, c.backend);
}

bool hit_ground_event(const Ctx& c, int side) {
  for (const auto& e : *c.events)
    if (e.kind == GameEvent::Kind::BallGround && e.actor == side) return true;
  return false;
}

bool net_contact_by(const Ctx& c, Team team) {
  for (const auto& e : *c.events)
    if (e.kind == GameEvent::Kind::NetContact &&
        e.actor == static_cast<int>(team))
      return true;
  return false;
}

void euler_angles(const Ctx& c, double& roll, double& pitch, double& yaw) {
  roll = pitch = yaw = 0.0;
  if (c.backend == DynamicsBackend::Quadrotor)
    c.cur->drones[c.trainee].body.attitude.to_euler(roll, pitch, yaw);
}

RewardTerm dense(std::string name, RewardPhase phase, double lo, double hi,
                 std::function<double(const Ctx&)> f) {
  return {std::move(name), phase, false, lo, hi, std::move(f)};
}
RewardTerm sparse(std::string name, RewardPhase phase, double lo, double hi,
                  std::function<double(const Ctx&)> f) {
  return {std::move(name), phase, true, lo, hi, std::move(f)};
}

RewardTerm dist_to_ball(double hi) {
  return dense("dist_to_ball", RewardPhase::BeforeHit, 0.0, hi, [hi](const Ctx& c) {
    return hi * std::exp(-(c.cur->ball.position - trainee_pos(c)).norm());
  });
}

RewardTerm drone_hit_ball(double hi) {
  return sparse("drone_hit_ball", RewardPhase::BeforeHit, 0.0, hi,
                [hi](const Ctx& c) { return c.trainee_hit_this_step ? hi : 0.0; });
}

// Fires once if the drone strays over the net plane onto the opponent side.
RewardTerm penalty_pos_x(double lo) {
  return sparse("penalty_pos_x", RewardPhase::BeforeHit, lo, 0.0,
                [lo](const Ctx& c) { return trainee_pos(c).x > 0.0 ? lo : 0.0; });
}

RewardTerm penalty_pos_xy(double lo) {
  return dense("penalty_pos_xy", RewardPhase::BeforeHit, lo, 0.0, [](const Ctx& c) {
    Vec3 p = trainee_pos(c);
    double dx = p.x - c.ideal_point.x, dy = p.y - c.ideal_point.y;
    return -0.5 * (dx * dx + dy * dy);
  });
}

// Ball heading toward the anchor right after the hit (evaluated once).
RewardTerm ball_vel_direction(double hi) {
  return sparse("ball_vel_direction", RewardPhase::AfterHit, 0.0, hi,
                [hi](const Ctx& c) {
                  Vec3 to_anchor = (c.anchor - c.cur->ball.position).normalized();
                  Vec3 v = c.cur->ball.velocity.normalized();
                  return hi * std::max(0.0, v.dot(to_anchor));
                });
}

RewardTerm dist_to_anchor(double hi) {
  return dense("dist_to_anchor", RewardPhase::AfterHit, 0.0, hi, [hi](const Ctx& c) {
    return hi * std::exp(-(c.cur->ball.position - c.anchor).norm());
  });
}

RewardTerm drone_dist_to_anchor(double hi) {
  return dense("drone_dist_to_anchor", RewardPhase::AfterHit, 0.0, hi,
               [hi](const Ctx& c) {
                 return hi * std::exp(-(trainee_pos(c) - c.ideal_point).norm());
               });
}

// Horizontal ball-to-anchor closeness, active once the ball descends below 3 m.
RewardTerm secondary_dist_to_anchor(double hi) {
  return dense("secondary_dist_to_anchor", RewardPhase::AfterHit, 0.0, hi,
               [hi](const Ctx& c) {
                 const Vec3& b = c.cur->ball.position;
                 if (b.z > 3.0) return 0.0;
                 double dx = b.x - c.anchor.x, dy = b.y - c.anchor.y;
                 return hi * std::exp(-std::sqrt(dx * dx + dy * dy));
               });
}

RewardTerm highest_ball_sparse(double hi) {
  return sparse("highest_ball_pos", RewardPhase::End, 0.0, hi,
                [hi](const Ctx& c) { return c.ball_peak > 3.0 ? hi : 0.0; });
}

RewardTerm highest_ball_dense(double hi) {
  return dense("highest_ball_pos", RewardPhase::AfterHit, 0.0, hi,
               [hi](const Ctx& c) {
                 return hi * std::clamp(c.cur->ball.position.z / 6.0, 0.0, 1.0);
               });
}

RewardTerm in_side(double hi) {
  return sparse("in_side", RewardPhase::End, 0.0, hi, [hi](const Ctx& c) {
    return hit_ground_event(c, static_cast<int>(Team::Team2)) ? hi : 0.0;
  });
}

RewardTerm ball_hit_ground(double hi) {
  return sparse("ball_hit_ground", RewardPhase::End, 0.0, hi, [hi](const Ctx& c) {
    return hit_ground_event(c, static_cast<int>(Team::Team2)) ? hi : 0.0;
  });
}

RewardTerm ball_final_vel() {
  return sparse("ball_final_vel", RewardPhase::End, 0.0,
                std::numeric_limits<double>::infinity(), [](const Ctx& c) {
                  return hit_ground_event(c, static_cast<int>(Team::Team2))
                             ? c.cur->ball.velocity.norm()
                             : 0.0;
                });
}

RewardTerm penalty_ground_collision(double lo) {
  return sparse("penalty_ground_collision", RewardPhase::End, lo, 0.0,
                [lo](const Ctx& c) { return c.trainee_grounded_any ? lo : 0.0; });
}

RewardTerm penalty_wrong_hit(double lo) {
  return sparse("penalty_wrong_hit", RewardPhase::End, lo, 0.0,
                [lo](const Ctx& c) { return c.body_contact_any ? lo : 0.0; });
}

RewardTerm penalty_not_hit_ball(double lo) {
  return sparse("penalty_not_hit_ball", RewardPhase::End, lo, 0.0,
                [lo](const Ctx& c) { return c.trainee_hit_any ? 0.0 : lo; });
}

RewardTerm penalty_hit_net(double lo) {
  return sparse("penalty_hit_net", RewardPhase::End, lo, 0.0, [lo](const Ctx& c) {
    return net_contact_by(c, Team::Team1) ? lo : 0.0;
  });
}

RewardTerm penalty_roll(double lo) {
  return dense("penalty_roll", RewardPhase::BeforeHit, lo, 0.0, [](const Ctx& c) {
    double r, p, y;
    euler_angles(c, r, p, y);
    return -std::abs(r);
  });
}

RewardTerm penalty_yaw(double lo) {
  return dense("penalty_yaw", RewardPhase::BeforeHit, lo, 0.0, [](const Ctx& c) {
    double r, p, y;
    euler_angles(c, r, p, y);
    return -std::abs(y);
  });
}

RewardTerm drone_pos_z(double hi) {
  return dense("drone_pos_z", RewardPhase::BeforeHit, 0.0, hi, [hi](const Ctx& c) {
    return hi * std::clamp(trainee_pos(c).z / 4.0, 0.0, 1.0);
  });
}

RewardTerm drone_vel_z(double hi) {
  return dense("drone_vel_z", RewardPhase::BeforeHit, 0.0, hi, [hi](const Ctx& c) {
    return std::clamp(trainee_vel(c).z, 0.0, hi);
  });
}

// Post-hit ball velocity crossing checks for attacks (evaluated once).
RewardTerm ball_vel_x(double hi) {
  return sparse("ball_vel_x", RewardPhase::AfterHit, 0.0, hi, [hi](const Ctx& c) {
    return c.cur->ball.velocity.x > 0.0 ? hi : 0.0;
  });
}
RewardTerm ball_vel_z(double hi) {
  return sparse("ball_vel_z", RewardPhase::AfterHit, 0.0, hi, [hi](const Ctx& c) {
    return c.cur->ball.velocity.z < 0.0 ? hi : 0.0;
  });
}

RewardTerm hover_pos(double hi) {
  return dense("drone_pos", RewardPhase::BeforeHit, 0.0, hi, [hi](const Ctx& c) {
    return hi * std::exp(-(trainee_pos(c) - c.hover_target).norm());
  });
}
RewardTerm hover_up(double hi) {
  return dense("drone_up", RewardPhase::BeforeHit, 0.0, hi, [hi](const Ctx& c) {
    return hi * std::clamp(c.cur->drone_up(c.trainee, c.backend).z, 0.0, 1.0);
  });
}
RewardTerm hover_spin(double hi) {
  return dense("drone_spin", RewardPhase::BeforeHit, 0.0, hi, [hi](const Ctx& c) {
    Vec3 w = c.backend == DynamicsBackend::Quadrotor
                 ? c.cur->drones[c.trainee].body.angular_velocity
                 : Vec3{};
    return hi * std::exp(-w.norm());
  });
}
RewardTerm drone_effort(double hi) {
  return dense("drone_effort", RewardPhase::BeforeHit, 0.0, hi, [hi](const Ctx& c) {
    double dev = 0.0;
    for (double v : c.last_command) dev += std::abs(v - 0.5);
    dev = std::clamp(dev / 2.0, 0.0, 1.0);  // mean deviation, rescaled to [0,1]
    return hi * (1.0 - dev);
  });
}

}  // namespace

SkillTask make_skill_task(SkillId id, const EnvOptions& env,
                          const TacticalParams& tactical) {
  SkillTask task;
  task.skill = id;
  task.tactical = tactical;
  task.trainee = role_of(id);
  const auto& recv = env.formation.receiving;

  switch (id) {
    case SkillId::Serve:
      task.ideal_point = env.formation.serving[0];
      task.anchor = tactical.serve_target;
      task.terms = {dist_to_ball(0.16), drone_hit_ball(10.0),
                    penalty_pos_x(-150.0), in_side(10.0),
                    highest_ball_sparse(1.5), penalty_ground_collision(-0.1),
                    penalty_wrong_hit(-10.0)};
      break;
    case SkillId::Receive:
      task.ideal_point = recv[0];
      task.anchor = recv[1] + Vec3{0.0, 0.0, 1.0};  // above the setter
      task.terms = {dist_to_ball(10.0), drone_hit_ball(150.0),
                    ball_vel_direction(150.0), secondary_dist_to_anchor(200.0),
                    highest_ball_dense(200.0), penalty_ground_collision(-100.0)};
      task.prerequisites = {SkillId::Serve};
      break;
    case SkillId::Set:
      task.ideal_point = recv[1];
      task.anchor = recv[2] + Vec3{0.0, 0.0, 2.0};  // above the attacker
      task.terms = {dist_to_ball(2.0), drone_hit_ball(40.0),
                    penalty_pos_xy(-10.0), dist_to_anchor(10.0),
                    drone_dist_to_anchor(200.0), highest_ball_dense(400.0),
                    penalty_ground_collision(-100.0)};
      break;
    case SkillId::Attack: {
      task.ideal_point = recv[2];
      double ty = tactical.attack_direction == 0 ? 1.5 : -1.5;
      task.anchor = {3.0, ty, 0.3};
      task.terms = {dist_to_ball(1.0), drone_hit_ball(20.0), drone_pos_z(400.0),
                    penalty_yaw(-2.0 * M_PI), penalty_roll(-2.0 * M_PI),
                    dist_to_anchor(150.0), ball_vel_x(1.0), ball_vel_z(150.0),
                    ball_hit_ground(5.0), ball_final_vel(), in_side(10.0),
                    penalty_hit_net(-10.0), penalty_ground_collision(-100.0)};
      task.prerequisites = {SkillId::Set};
      break;
    }
    case SkillId::Pass:
      task.ideal_point = recv[0];
      task.anchor = recv[1] + Vec3{0.0, 0.0, 1.0};
      task.terms = {dist_to_ball(10.0), drone_hit_ball(150.0),
                    drone_vel_z(2.5), penalty_roll(-0.5 * M_PI),
                    penalty_yaw(-0.5 * M_PI), ball_vel_direction(150.0),
                    secondary_dist_to_anchor(200.0), highest_ball_dense(200.0),
                    penalty_not_hit_ball(-10.0),
                    penalty_ground_collision(-100.0)};
      task.prerequisites = {SkillId::Set, SkillId::Attack};
      break;
    case SkillId::HoverServe:
    case SkillId::HoverReceive:
    case SkillId::HoverPass:
    case SkillId::HoverSet:
    case SkillId::HoverAttack:
      task.terms = {hover_pos(3.0), hover_up(3.0), hover_spin(3.0)};
      task.prerequisites = {hover_preceding_of(id)};
      task.episode_steps = 100;
      break;
    case SkillId::GoTo:
      task.hover_target = tactical.goto_target;
      task.terms = {hover_pos(1.0), hover_up(1.0), hover_spin(1.0),
                    drone_effort(0.1)};
      task.episode_steps = 150;
      break;
  }
  if (is_ball_skill(id)) task.episode_steps = 150;
  return task;
}

SkillRewardEngine::SkillRewardEngine(const SkillTask& task) : task_(task) {
  for (const RewardTerm& t : task.terms)
    if (t.phase != RewardPhase::BeforeHit) has_post_ = true;
  reset();
}

void SkillRewardEngine::reset() {
  phase_ = RewardPhase::BeforeHit;
  fired_.assign(task_.terms.size(), false);
}

double SkillRewardEngine::step(SkillStepContext& ctx) {
  double total = 0.0;
  for (size_t i = 0; i < task_.terms.size(); ++i) {
    const RewardTerm& term = task_.terms[i];
    bool active = term.phase == RewardPhase::End ? ctx.terminal
                                                 : term.phase == phase_;
    if (!active || (term.sparse && fired_[i])) continue;
    double v = std::clamp(term.evaluator(ctx), term.lo, term.hi);
    if (term.sparse) {
      if (v == 0.0) continue;
      fired_[i] = true;
    }
    total += v;
  }
  if (has_post_ && ctx.trainee_hit_this_step) phase_ = RewardPhase::AfterHit;
  return total;
}

// ---------------------------------------------------------------------------
// Scripted controllers

namespace {

Vec3 mirror_for(Team team, const Vec3& v) {
  return team == Team::Team2 ? Vec3{-v.x, -v.y, v.z} : v;
}

DroneCommand hold_command(const GameState& state, int drone, const Vec3& target,
                          const EnvOptions& env) {
  return env.backend == DynamicsBackend::Kinematic
             ? control::kinematic_goto(state, drone, target, env)
             : control::quad_position_hold(state, drone, target, env);
}

}  // namespace

DroneCommand scripted_skill_command(const GameState& state, int drone,
                                    SkillId skill,
                                    const TacticalParams& tactical,
                                    const EnvOptions& env) {
  Team team = game::team_of_drone(drone);
  Vec3 p = state.drone_position(drone, env.backend);

  if (skill == SkillId::GoTo)
    return hold_command(state, drone, mirror_for(team, tactical.goto_target),
                        env);
  if (is_hover(skill))
    return hold_command(state, drone, {p.x, p.y, 1.5}, env);

  // Ball skills: slide under the predicted drop point while allowed to play
  // the ball, otherwise hold station at hover altitude.
  if (!hit_permitted(state, drone))
    return hold_command(state, drone, {p.x, p.y, 1.5}, env);

  const double contact_z = 1.3;  // racket plane ends up just above this
  Vec3 ip = control::predict_ball_at_height(state.ball, contact_z + 0.15);
  double lo = team == Team::Team1 ? -env.court.half_length + 0.1 : 0.3;
  double hi = team == Team::Team1 ? -0.3 : env.court.half_length - 0.1;
  ip.x = std::clamp(ip.x, lo, hi);
  ip.y = std::clamp(ip.y, -env.court.half_width + 0.1,
                    env.court.half_width - 0.1);
  return hold_command(state, drone, {ip.x, ip.y, contact_z}, env);
}

// ---------------------------------------------------------------------------
// Episode runner

namespace {

struct EpisodeSetup {
  GameState state;
  TacticalParams tactical;
  Vec3 anchor, ideal, hover_target;
  // Hover variants wait for the trainee's own preceding hit; everything else
  // opens the control window immediately.
  bool wait_for_own_hit = false;
  SkillId context_skill = SkillId::GoTo;  // trainee behavior before the window
  bool end_on_trainee_hit = true;
  std::array<Vec3, 6> park;
};

void place_drone(GameState& state, int i, const Vec3& pos) {
  state.drones[i].kin.position = pos;
  state.drones[i].kin.velocity = {};
  state.drones[i].body.position = pos;
  state.drones[i].body.linear_velocity = {};
  state.drones[i].body.angular_velocity = {};
  state.drones[i].body.attitude = UnitQuaternion::identity();
}

// Ballistic velocity that carries the ball from `from` to `to` in `t` seconds.
Vec3 launch_velocity(const Vec3& from, const Vec3& to, double t) {
  const double g = 9.81;
  Vec3 d = to - from;
  return {d.x / t, d.y / t, d.z / t + 0.5 * g * t};
}

EpisodeSetup setup_episode(const SkillTask& task, const EnvOptions& env,
                           std::uint64_t seed) {
  EpisodeSetup ep;
  ep.tactical = task.tactical;
  ep.anchor = task.anchor;
  ep.ideal = task.ideal_point;
  ep.hover_target = task.hover_target;

  SkillId base = is_hover(task.skill) ? hover_preceding_of(task.skill)
                                      : task.skill;
  Rng rng(seed ^ 0xA24BAED4963EE407ull);
  double sigma = task.set_init_sigma;

  switch (base) {
    case SkillId::Serve:
      ep.state = game::reset(env, seed, Team::Team1);
      break;
    case SkillId::Receive: {
      // Incoming serve already on its way over the net.
      ep.state = game::reset(env, seed, Team::Team2);
      Vec3 from{5.5, rng.normal() * 0.5, 3.5};
      Vec3 to{-2.0 + rng.normal() * sigma, 1.5 + rng.normal() * sigma, 1.6};
      ep.state.ball.position = from;
      ep.state.ball.velocity = launch_velocity(from, to, 1.3);
      ep.state.ball_side = Team::Team2;  // flips at the net crossing
      ep.state.last_touch_team = Team::Team2;
      ep.state.phase = game::Phase::Rally;
      break;
    }
    case SkillId::Set: {
      // Ball dropping onto the setter after a receive.
      ep.state = game::reset(env, seed, Team::Team2);
      Vec3 setter = env.formation.receiving[1];
      ep.state.ball.position = {setter.x + rng.normal() * sigma,
                                setter.y + rng.normal() * sigma, 4.0};
      ep.state.ball.velocity = {};
      ep.state.ball_side = Team::Team1;
      ep.state.last_hitter = 0;
      ep.state.last_touch_team = Team::Team1;
      ep.state.team_hit_counts[0] = 1;
      ep.state.phase = game::Phase::Rally;
      break;
    }
    case SkillId::Attack: {
      // Ball lobbed from the setter station toward a point above the attacker.
      ep.state = game::reset(env, seed, Team::Team2);
      Vec3 from = env.formation.receiving[1] + Vec3{0.0, 0.0, 1.3};
      Vec3 attacker = env.formation.receiving[2];
      Vec3 to{attacker.x + rng.normal() * sigma,
              attacker.y + rng.normal() * sigma, 2.2};
      ep.state.ball.position = from;
      ep.state.ball.velocity = launch_velocity(from, to, 0.9);
      ep.state.ball_side = Team::Team1;
      ep.state.last_hitter = 1;
      ep.state.last_touch_team = Team::Team1;
      ep.state.team_hit_counts[0] = 2;
      ep.state.phase = game::Phase::Rally;
      break;
    }
    case SkillId::Pass: {
      // Incoming attack from the opponent's front row.
      ep.state = game::reset(env, seed, Team::Team2);
      Vec3 from{2.0, rng.uniform(-1.5, 1.5), 3.0};
      Vec3 to{-2.0 + rng.normal() * sigma, 1.5 + rng.normal() * sigma, 1.3};
      ep.state.ball.position = from;
      ep.state.ball.velocity = launch_velocity(from, to, 0.8);
      ep.state.ball_side = Team::Team2;
      ep.state.last_hitter = 5;
      ep.state.last_touch_team = Team::Team2;
      ep.state.team_hit_counts[1] = 3;
      ep.state.phase = game::Phase::Rally;
      break;
    }
    case SkillId::GoTo: {
      ep.state = game::reset(env, seed, Team::Team2);
      Vec3 start{rng.uniform(-5.0, -1.0), rng.uniform(-2.0, 2.0),
                 rng.uniform(1.0, 2.5)};
      ep.tactical.goto_target = {rng.uniform(-5.0, -1.0),
                                 rng.uniform(-2.0, 2.0), rng.uniform(1.0, 2.5)};
      ep.hover_target = ep.tactical.goto_target;
      place_drone(ep.state, task.trainee, start);
      // Park the ball far above the court so it never lands in-episode.
      ep.state.ball.position = {-3.0, 0.0, 500.0};
      ep.state.ball.velocity = {};
      ep.state.phase = game::Phase::Rally;
      break;
    }
    default:
      throw std::logic_error("unhandled skill setup");
  }

  if (is_hover(task.skill)) {
    ep.wait_for_own_hit = true;
    ep.context_skill = base;
    ep.end_on_trainee_hit = false;
  } else if (!is_ball_skill(task.skill)) {
    ep.end_on_trainee_hit = false;
  }
  for (int i = 0; i < 6; ++i)
    ep.park[i] = ep.state.drone_position(i, env.backend);
  return ep;
}

DroneCommand command_from_action(const net::Action& action,
                                 const EnvOptions& env) {
  std::vector<double> v = action.squashed();
  DroneCommand cmd;
  for (size_t i = 0; i < v.size() && i < 4; ++i) cmd.values[i] = v[i];
  if (env.backend == DynamicsBackend::Kinematic) cmd.values[3] = 0.5;
  return cmd;
}

}  // namespace

SkillEpisodeResult run_skill_episode(const SkillTask& task,
                                     const PolicyParams* policy,
                                     const std::map<SkillId, PolicyParams>& prereq,
                                     const EnvOptions& env, std::uint64_t seed,
                                     Rng* action_rng,
                                     bool allow_scripted_context) {
  EpisodeSetup ep = setup_episode(task, env, seed);
  const PolicyParams* context_policy = nullptr;
  if (ep.wait_for_own_hit) {
    auto it = prereq.find(ep.context_skill);
    if (it != prereq.end())
      context_policy = &it->second;
    else if (!allow_scripted_context)
      throw std::invalid_argument("missing prerequisite policy for " +
                                  skill_name(ep.context_skill));
  }

  SkillRewardEngine engine(task);
  SkillStepContext ctx;
  ctx.trainee = task.trainee;
  ctx.backend = env.backend;
  ctx.tactical = ep.tactical;
  ctx.anchor = ep.anchor;
  ctx.ideal_point = ep.ideal;
  ctx.hover_target = ep.hover_target;

  SkillEpisodeResult result;
  bool window_open = !ep.wait_for_own_hit;
  bool window_closed = false;
  int window_steps = 0, pre_steps = 0, post_steps = 0;
  const int pre_cap = 200, post_cap = 250;
  GameState prev;

  while (true) {
    std::array<DroneCommand, 6> cmds;
    for (int i = 0; i < 6; ++i)
      cmds[i] = hold_command(ep.state, i, ep.park[i], env);

    bool recorded = false;
    if (window_open && !window_closed) {
      std::vector<double> obs = build_observation(
          task.skill, ep.state.drone_root(task.trainee, env.backend),
          ep.state.ball, ctx.tactical, hit_permitted(ep.state, task.trainee));
      if (policy) {
        net::ForwardResult fr = net::forward(*policy, obs);
        net::Action act;
        if (action_rng) {
          act = net::sample(fr.dist, *action_rng);
        } else {
          act.continuous = fr.dist.mean;
        }
        rl::Transition t;
        t.obs = obs;
        t.action = act;
        t.log_prob = net::log_prob(fr.dist, act);
        t.value = fr.value;
        cmds[task.trainee] = command_from_action(act, env);
        result.trajectory.transitions.push_back(std::move(t));
        recorded = true;
      } else {
        cmds[task.trainee] = scripted_skill_command(ep.state, task.trainee,
                                                    task.skill, ctx.tactical,
                                                    env);
      }
      ++window_steps;
      ++result.trainee_steps;
    } else if (!window_open) {
      // Hover variants: the same drone performs the preceding skill first.
      if (context_policy) {
        std::vector<double> obs = build_observation(
            ep.context_skill, ep.state.drone_root(task.trainee, env.backend),
            ep.state.ball, ctx.tactical, hit_permitted(ep.state, task.trainee));
        net::ForwardResult fr = net::forward(*context_policy, obs);
        net::Action act;
        act.continuous = fr.dist.mean;
        cmds[task.trainee] = command_from_action(act, env);
      } else {
        cmds[task.trainee] = scripted_skill_command(
            ep.state, task.trainee, ep.context_skill, ctx.tactical, env);
      }
      ++pre_steps;
    } else {
      cmds[task.trainee] =
          hold_command(ep.state, task.trainee,
                       {ep.park[task.trainee].x, ep.park[task.trainee].y, 1.5},
                       env);
      ++post_steps;
    }

    bool engine_ran_this_step = window_open;
    prev = ep.state;
    game::StepResult res = game::step(ep.state, cmds, env);

    ctx.prev = &prev;
    ctx.cur = &ep.state;
    ctx.events = &res.events;
    ctx.outcome = res.outcome;
    ctx.terminal = res.outcome.terminal();
    ctx.last_command = cmds[task.trainee].values;
    ctx.trainee_hit_this_step = false;
    for (const auto& e : res.events) {
      if (e.kind == GameEvent::Kind::RacketHit && e.actor == task.trainee)
        ctx.trainee_hit_this_step = true;
      if (e.kind == GameEvent::Kind::DroneGround && e.actor == task.trainee)
        ctx.trainee_grounded_any = true;
    }
    if (ctx.trainee_hit_this_step) ctx.trainee_hit_any = true;
    if (ctx.trainee_hit_any)
      ctx.ball_peak = std::max(ctx.ball_peak, ep.state.ball.position.z);
    // Ball touching the body from below or the side (the racket covers the
    // up-facing half) counts as an illegal body contact.
    Vec3 gap = ep.state.ball.position -
               ep.state.drone_position(task.trainee, env.backend);
    if (!ctx.trainee_hit_this_step &&
        gap.norm() < env.drone_body_radius + ep.state.ball.radius &&
        gap.dot(ep.state.drone_up(task.trainee, env.backend)) < 0.0)
      ctx.body_contact_any = true;

    double r = 0.0;
    if (engine_ran_this_step && !window_closed) {
      r = engine.step(ctx);
    } else if (window_closed) {
      ctx.trainee_hit_this_step = false;  // post-window contacts don't rephase
      r = engine.step(ctx);
    }
    result.total_reward += r;
    if (recorded) {
      result.trajectory.transitions.back().reward = r;
    } else if (!result.trajectory.transitions.empty()) {
      result.trajectory.transitions.back().reward += r;
    }

    // Window transitions.
    if (!window_open) {
      if (ctx.trainee_hit_any) {
        window_open = true;
        Vec3 p = ep.state.drone_position(task.trainee, env.backend);
        ctx.hover_target = {p.x, p.y, std::clamp(p.z, 1.0, 2.5)};
        ctx.tactical.goto_target = ctx.hover_target;
      } else if (pre_steps >= pre_cap || ctx.terminal) {
        result.outcome = res.outcome;
        break;  // context never produced the hit; empty episode
      }
      continue;
    }
    if (ep.end_on_trainee_hit && ctx.trainee_hit_this_step)
      window_closed = true;

    if (ctx.terminal) {
      result.outcome = res.outcome;
      if (!result.trajectory.transitions.empty())
        result.trajectory.transitions.back().done = true;
      break;
    }
    if (!window_closed && window_steps >= task.episode_steps) {
      result.outcome = res.outcome;
      // Time-limited tasks bootstrap off the final state instead of a
      // terminal marker.
      if (policy && !ep.end_on_trainee_hit &&
          !result.trajectory.transitions.empty()) {
        std::vector<double> obs = build_observation(
            task.skill, ep.state.drone_root(task.trainee, env.backend),
            ep.state.ball, ctx.tactical, hit_permitted(ep.state, task.trainee));
        result.trajectory.bootstrap_value = net::forward(*policy, obs).value;
      } else if (!result.trajectory.transitions.empty()) {
        result.trajectory.transitions.back().done = true;
      }
      break;
    }
    if (window_closed) {
      if (window_steps >= task.episode_steps + post_cap ||
          post_steps >= post_cap) {
        result.outcome = res.outcome;
        if (!result.trajectory.transitions.empty())
          result.trajectory.transitions.back().done = true;
        break;
      }
    }
  }

  if (result.trainee_steps > 0)
    result.mean_step_reward = result.total_reward / result.trainee_steps;
  return result;
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

std::uint64_t eval_seed(std::uint64_t base, int i) {
  return base * 7919 + 5000000 + static_cast<std::uint64_t>(i);
}

}  // namespace

SkillTrainResult chain_train(const std::map<SkillId, PolicyParams>& prereq,
                             const SkillTask& task, const EnvOptions& env,
                             const SkillTrainConfig& config) {
  if (is_hover(task.skill) && !config.allow_scripted_context) {
    SkillId base = hover_preceding_of(task.skill);
    if (!prereq.count(base))
      throw std::invalid_argument("chain_train: missing prerequisite " +
                                  skill_name(base));
  }

  net::MlpSpec spec;
  spec.input_dim = observation_dim(task.skill);
  spec.hidden = config.hidden;
  spec.head_kind = net::HeadKind::Gaussian;
  spec.gaussian_dim =
      env.backend == DynamicsBackend::Kinematic ? 3 : 4;

  Rng rng(config.seed ^ 0x9E3779B97F4A7C15ull);
  PolicyParams params = net::PolicyParams::init(spec, rng);
  rl::PpoLearner learner(std::move(params), config.ppo);
  Rng action_rng = rng.split();

  SkillTrainResult out;
  out.best_params = learner.params();
  out.best_eval_reward = -std::numeric_limits<double>::infinity();
  std::uint64_t episode_counter = 0;

  auto evaluate = [&]() {
    double acc = 0.0;
    for (int i = 0; i < config.eval_episodes; ++i) {
      SkillEpisodeResult r =
          run_skill_episode(task, &learner.params(), prereq, env,
                            eval_seed(config.seed, i), nullptr,
                            config.allow_scripted_context);
      acc += r.mean_step_reward;
    }
    return acc / std::max(1, config.eval_episodes);
  };

  for (int iter = 0; iter < config.iterations; ++iter) {
    std::vector<rl::Trajectory> trajs;
    double iter_reward = 0.0;
    std::size_t samples = 0;
    for (int e = 0; e < config.episodes_per_iteration; ++e) {
      std::uint64_t seed = config.seed * 1000003ull + episode_counter++;
      SkillEpisodeResult r =
          run_skill_episode(task, &learner.params(), prereq, env, seed,
                            &action_rng, config.allow_scripted_context);
      iter_reward += r.total_reward;
      if (!r.trajectory.transitions.empty()) {
        samples += r.trajectory.transitions.size();
        trajs.push_back(std::move(r.trajectory));
      }
    }
    out.train_curve.push_back(iter_reward /
                              std::max(1, config.episodes_per_iteration));
    if (samples < static_cast<std::size_t>(config.ppo.minibatches)) continue;
    rl::UpdateStats stats = learner.update(trajs, rng);
    if (stats.aborted) break;  // diverged; keep the last good parameters

    if ((iter + 1) % config.eval_interval == 0 ||
        iter + 1 == config.iterations) {
      double score = evaluate();
      out.eval_curve.push_back(score);
      if (score > out.best_eval_reward) {
        out.best_eval_reward = score;
        out.best_params = learner.params();
      }
    }
  }
  if (out.eval_curve.empty()) {
    out.best_eval_reward = evaluate();
    out.eval_curve.push_back(out.best_eval_reward);
    out.best_params = learner.params();
  }
  return out;
}

SkillTrainResult train_skill(const SkillTask& task, const EnvOptions& env,
                             const SkillTrainConfig& config) {
  return chain_train({}, task, env, config);
}

double scripted_oracle_score(const SkillTask& task, const EnvOptions& env,
                             int episodes, std::uint64_t seed) {
  double acc = 0.0;
  for (int i = 0; i < episodes; ++i) {
    SkillEpisodeResult r = run_skill_episode(task, nullptr, {}, env,
                                             eval_seed(seed, i), nullptr, true);
    acc += r.mean_step_reward;
  }
  return acc / std::max(1, episodes);
}

}  // namespace hcsp::skills
