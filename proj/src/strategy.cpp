#include "hcsp/strategy.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "hcsp/control.hpp"

namespace hcsp::strategy {

using game::DroneCommand;
using game::DynamicsBackend;
using game::EnvOptions;
using game::GameEvent;
using game::Phase;
using game::Team;

game::DroneRootState mirror_root(const game::DroneRootState& root,
                                 game::DynamicsBackend backend) {
  game::DroneRootState m = root;
  m[0] = -root[0];
  m[1] = -root[1];
  m[7] = -root[7];  // linear velocity xy
  m[8] = -root[8];
  if (backend == DynamicsBackend::Quadrotor) {
    // Attitude premultiplied by the half-turn about world z; body-frame
    // angular velocity is unchanged by a world-frame rotation.
    UnitQuaternion q{root[3], root[4], root[5], root[6]};
    UnitQuaternion r = UnitQuaternion{0.0, 0.0, 0.0, 1.0} * q;
    m[3] = r.w;
    m[4] = r.x;
    m[5] = r.y;
    m[6] = r.z;
    m[13] = -root[13];  // heading xy
    m[14] = -root[14];
    m[16] = -root[16];  // up xy
    m[17] = -root[17];
  }
  return m;
}

game::BallState mirror_ball(const game::BallState& ball) {
  game::BallState m = ball;
  m.position.x = -ball.position.x;
  m.position.y = -ball.position.y;
  m.velocity.x = -ball.velocity.x;
  m.velocity.y = -ball.velocity.y;
  return m;
}

game::DroneCommand mirror_kinematic_command(const game::DroneCommand& cmd) {
  game::DroneCommand m = cmd;
  m.values[0] = 1.0 - cmd.values[0];
  m.values[1] = 1.0 - cmd.values[1];
  return m;
}

std::vector<int> DecodeOptions::head_sizes() const {
  std::vector<int> sizes{6, 3, 4};
  for (const ExtraOption& e : extras) sizes[e.head]++;
  return sizes;
}

std::vector<double> build_high_obs(const GameState& state, Team team,
                                   DynamicsBackend backend) {
  std::vector<double> obs;
  obs.reserve(kHighObsDim);
  bool mirror = team == Team::Team2;
  int base = team == Team::Team1 ? 0 : 3;

  for (int k = 0; k < 6; ++k) {
    int d = (base + k) % 6;  // teammates first
    game::DroneRootState root = state.drone_root(d, backend);
    if (mirror) root = mirror_root(root, backend);
    obs.insert(obs.end(), root.begin(), root.begin() + 13);
  }
  game::BallState ball = mirror ? mirror_ball(state.ball) : state.ball;
  obs.insert(obs.end(), {ball.position.x, ball.position.y, ball.position.z,
                         ball.velocity.x, ball.velocity.y, ball.velocity.z});
  for (int k = 0; k < 6; ++k)
    obs.push_back(state.hit_flags[(base + k) % 6] ? 1.0 : 0.0);
  obs.push_back(state.ball_side == team ? 1.0 : 0.0);
  obs.push_back(state.ball_side == team ? 0.0 : 1.0);

  // Phase one-hot: {we serve, they serve, rally on our side with 0/1/2+ own
  // hits, rally on their side with 0/1/2+ opponent hits}.
  std::array<double, 8> phase{};
  if (state.phase == Phase::Serve) {
    phase[state.serving_team == team ? 0 : 1] = 1.0;
  } else {
    bool ours = state.ball_side == team;
    int hits = state.team_hit_counts[static_cast<int>(state.ball_side)];
    phase[(ours ? 2 : 5) + std::min(hits, 2)] = 1.0;
  }
  obs.insert(obs.end(), phase.begin(), phase.end());

  if (static_cast<int>(obs.size()) != kHighObsDim)
    throw std::logic_error("high-level observation size mismatch");
  return obs;
}

namespace {

// Resolves an appended catalog option: the k-th extra registered for `head`.
bool decode_extra(const DecodeOptions& opts, int head, int index_past_base,
                  Assignment& out) {
  int k = 0;
  for (const ExtraOption& e : opts.extras) {
    if (e.head != head) continue;
    if (k++ == index_past_base) {
      out.skill = e.skill;
      out.tactical = e.tactical;
      out.variant = e.variant;
      return true;
    }
  }
  return false;
}

}  // namespace

std::array<Assignment, 3> decode_action(const HighLevelAction& action,
                                        Phase phase, bool we_serve,
                                        const DecodeOptions& opts) {
  std::array<Assignment, 3> out;

  bool can_serve = phase == Phase::Serve && we_serve;
  if (action.pass_choice >= 6 || action.set_choice >= 3 ||
      action.attack_choice >= 4) {
    bool ok = true;
    if (action.pass_choice >= 6)
      ok &= decode_extra(opts, 0, action.pass_choice - 6, out[0]);
    if (action.set_choice >= 3)
      ok &= decode_extra(opts, 1, action.set_choice - 3, out[1]);
    if (action.attack_choice >= 4)
      ok &= decode_extra(opts, 2, action.attack_choice - 4, out[2]);
    if (!ok) throw std::invalid_argument("head choice beyond catalog");
    HighLevelAction base = action;
    if (action.pass_choice >= 6) base.pass_choice = kPassHover;
    if (action.set_choice >= 3) base.set_choice = kSetHover;
    if (action.attack_choice >= 4) base.attack_choice = kAttackHover;
    std::array<Assignment, 3> rest =
        decode_action(base, phase, we_serve, opts);
    if (action.pass_choice < 6) out[0] = rest[0];
    if (action.set_choice < 3) out[1] = rest[1];
    if (action.attack_choice < 4) out[2] = rest[2];
    return out;
  }

  switch (action.pass_choice) {
    case kServeLeft:
    case kServeRight:
      if (can_serve) {
        out[0].skill = SkillId::Serve;
        out[0].tactical.serve_target = action.pass_choice == kServeLeft
                                           ? opts.serve_anchor_left
                                           : opts.serve_anchor_right;
      } else {
        out[0].skill = SkillId::HoverPass;
      }
      break;
    case kReceive:
      out[0].skill = SkillId::Receive;
      break;
    case kPassLeft:
    case kPassRight:
      out[0].skill = SkillId::Pass;
      out[0].tactical.pass_side = action.pass_choice == kPassLeft ? 0 : 1;
      break;
    case kPassHover:
      out[0].skill = SkillId::HoverPass;
      break;
    default:
      throw std::invalid_argument("bad pass-role choice");
  }

  switch (action.set_choice) {
    case kSet:
      out[1].skill = SkillId::Set;
      break;
    case kSetHover:
      out[1].skill = SkillId::HoverSet;
      break;
    case kSetGoToReady:
      out[1].skill = SkillId::GoTo;
      out[1].tactical.goto_target = opts.ready[1];
      break;
    default:
      throw std::invalid_argument("bad set-role choice");
  }

  switch (action.attack_choice) {
    case kAttackLeft:
    case kAttackRight:
      out[2].skill = SkillId::Attack;
      out[2].tactical.attack_direction =
          action.attack_choice == kAttackLeft ? 0 : 1;
      break;
    case kAttackHover:
      out[2].skill = SkillId::HoverAttack;
      break;
    case kAttackGoToReady:
      out[2].skill = SkillId::GoTo;
      out[2].tactical.goto_target = opts.ready[2];
      break;
    default:
      throw std::invalid_argument("bad attack-role choice");
  }
  return out;
}

HighLevelAction bot_policy(const GameState& state, Team team) {
  HighLevelAction a;  // all-hover default
  if (state.phase == Phase::Serve) {
    if (state.serving_team == team) {
      a.pass_choice = kServeLeft;
    } else {
      a.pass_choice = kReceive;
      a.set_choice = kSetGoToReady;
      a.attack_choice = kAttackGoToReady;
    }
    return a;
  }
  if (state.ball_side != team) {
    // Ball with the opponent: passer preps the dig, others take stations.
    a.pass_choice = kPassLeft;
    a.set_choice = kSetGoToReady;
    a.attack_choice = kAttackGoToReady;
    return a;
  }
  switch (state.team_hit_counts[static_cast<int>(team)]) {
    case 0:
      a.pass_choice = kPassLeft;
      a.set_choice = kSetGoToReady;
      a.attack_choice = kAttackGoToReady;
      break;
    case 1:
      a.set_choice = kSet;
      a.attack_choice = kAttackGoToReady;
      break;
    default: {
      double y = team == Team::Team2 ? -state.ball.position.y
                                     : state.ball.position.y;
      a.attack_choice = y >= 0.0 ? kAttackRight : kAttackLeft;
      break;
    }
  }
  return a;
}

std::string pool_manifest_hash(const SkillPool& pool) {
  // FNV-1a over skill ids, variant counts, spec fields, and raw weights.
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& [id, variants] : pool) {
    int iid = static_cast<int>(id);
    mix(&iid, sizeof(iid));
    int count = static_cast<int>(variants.size());
    mix(&count, sizeof(count));
    for (const PolicyParams& params : variants) {
      mix(&params.spec.input_dim, sizeof(int));
      for (int hsz : params.spec.hidden) mix(&hsz, sizeof(int));
      mix(&params.spec.gaussian_dim, sizeof(int));
      mix(params.flat.data(), params.flat.size() * sizeof(double));
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Hierarchical executor

namespace {

DroneCommand command_from_action(const net::Action& action,
                                 const EnvOptions& env) {
  std::vector<double> v = action.squashed();
  DroneCommand cmd;
  for (std::size_t i = 0; i < v.size() && i < 4; ++i) cmd.values[i] = v[i];
  if (env.backend == DynamicsBackend::Kinematic) cmd.values[3] = 0.5;
  return cmd;
}

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

HighLevelAction decide(const HierarchicalTeamPolicy& pol,
                       const GameState& obs_state, Team team,
                       DynamicsBackend backend, Rng* rng,
                       rl::Transition* anchor) {
  if (!pol.high) return bot_policy(obs_state, team);

  std::vector<double> obs = build_high_obs(obs_state, team, backend);
  net::ForwardResult fr = net::forward(*pol.high, obs);
  net::Action act;
  if (rng) {
    act = net::sample(fr.dist, *rng);
  } else {
    for (const auto& probs : fr.dist.probs)
      act.categorical.push_back(argmax(probs));
  }
  if (anchor) {
    anchor->obs = std::move(obs);
    anchor->action = act;
    anchor->log_prob = net::log_prob(fr.dist, act);
    anchor->value = fr.value;
    anchor->event_step = true;
  }
  return HighLevelAction{act.categorical[0], act.categorical[1],
                         act.categorical[2]};
}

// Resolve skills whose target is "where I am now" at assignment time.
void pin_hover_targets(std::array<Assignment, 3>& assigns,
                       const GameState& state, Team team,
                       DynamicsBackend backend) {
  int base = team == Team::Team1 ? 0 : 3;
  for (int role = 0; role < 3; ++role) {
    if (!skills::is_hover(assigns[role].skill)) continue;
    Vec3 p = state.drone_position(base + role, backend);
    if (team == Team::Team2) p = {-p.x, -p.y, p.z};
    p.z = std::clamp(p.z, 1.0, 2.5);
    assigns[role].tactical.goto_target = p;
  }
}

}  // namespace

EpisodeRecord run_episode(const HierarchicalTeamPolicy& team1,
                          const HierarchicalTeamPolicy& team2,
                          const EnvOptions& env, const EpisodeOptions& opts) {
  const std::array<const HierarchicalTeamPolicy*, 2> teams{&team1, &team2};
  EpisodeRecord rec;
  GameState state = game::reset(env, opts.seed);
  std::vector<GameState> history{state};
  std::array<std::array<Assignment, 3>, 2> assigns;
  bool decision_pending = true;
  bool low_was_recording = false;
  int record_drone = -1;
  if (opts.record_skill)
    record_drone = skills::role_of(*opts.record_skill);  // team-1 drone

  while (true) {
    std::size_t lag =
        std::min<std::size_t>(env.observation_delay_steps, history.size() - 1);
    const GameState& obs_state = history[history.size() - 1 - lag];

    std::array<rl::Transition, 2> anchors;
    if (decision_pending) {
      for (int t = 0; t < 2; ++t) {
        Team team = static_cast<Team>(t);
        bool record = opts.record_high && teams[t]->high.has_value();
        HighLevelAction a =
            decide(*teams[t], obs_state, team, env.backend, opts.high_rng,
                   record ? &anchors[t] : nullptr);
        assigns[t] = decode_action(a, obs_state.phase,
                                   obs_state.serving_team == team,
                                   teams[t]->decode);
        pin_hover_targets(assigns[t], obs_state, team, env.backend);
        rec.decision_counts[t]++;
      }
    }

    std::array<DroneCommand, 6> cmds;
    bool low_recorded = false;
    net::ActionDistribution low_dist;
    std::vector<double> low_obs;
    for (int d = 0; d < 6; ++d) {
      int t = d / 3, role = d % 3;
      const Assignment& as = assigns[t][role];
      const HierarchicalTeamPolicy& pol = *teams[t];
      auto it = pol.skills.find(as.skill);
      if (it == pol.skills.end() || it->second.empty()) {
        if (!pol.allow_scripted_skills)
          throw std::invalid_argument("skill missing from pool: " +
                                      skills::skill_name(as.skill));
        cmds[d] = skills::scripted_skill_command(obs_state, d, as.skill,
                                                 as.tactical, env);
        continue;
      }
      const PolicyParams& skill_net =
          it->second[std::min<std::size_t>(as.variant,
                                           it->second.size() - 1)];
      game::DroneRootState root = obs_state.drone_root(d, env.backend);
      game::BallState ball = obs_state.ball;
      if (t == 1) {
        root = mirror_root(root, env.backend);
        ball = mirror_ball(ball);
      }
      std::vector<double> obs =
          skills::build_observation(as.skill, root, ball, as.tactical,
                                    skills::hit_permitted(obs_state, d));
      net::ForwardResult fr = net::forward(skill_net, obs);
      net::Action act;
      if (opts.low_rng) {
        act = net::sample(fr.dist, *opts.low_rng);
      } else {
        act.continuous = fr.dist.mean;
      }
      cmds[d] = command_from_action(act, env);
      if (t == 1 && env.backend == DynamicsBackend::Kinematic)
        cmds[d] = mirror_kinematic_command(cmds[d]);

      if (opts.record_skill && d == record_drone &&
          as.skill == *opts.record_skill) {
        rl::Transition tr;
        tr.obs = obs;
        tr.action = act;
        tr.log_prob = net::log_prob(fr.dist, act);
        tr.value = fr.value;
        rec.low.transitions.push_back(std::move(tr));
        low_dist = fr.dist;
        low_obs = std::move(obs);
        low_recorded = true;
      }
    }

    game::StepResult res = game::step(state, cmds, env);
    rec.steps++;
    history.push_back(state);
    if (history.size() > static_cast<std::size_t>(env.observation_delay_steps) + 2)
      history.erase(history.begin());

    std::array<bool, 2> hit_flags{false, false};
    for (const GameEvent& e : res.events)
      if (e.kind == GameEvent::Kind::RacketHit) {
        int t = static_cast<int>(game::team_of_drone(e.actor));
        hit_flags[t] = true;
        rec.racket_hits[t]++;
      }
    int delta = 0;
    if (res.outcome.result == game::Outcome::Result::Win)
      delta = res.outcome.winner == Team::Team1 ? 1 : -1;
    std::array<double, 2> reward =
        rl::high_level_reward(delta, hit_flags, opts.reward);

    if (opts.record_high) {
      for (int t = 0; t < 2; ++t) {
        if (!teams[t]->high) continue;
        rl::Transition tr;
        if (decision_pending) tr = std::move(anchors[t]);
        tr.reward = reward[t];
        tr.done = res.outcome.terminal();
        rec.high[t].transitions.push_back(std::move(tr));
      }
    }

    if (low_recorded) {
      double r = reward[0];
      if (opts.kl_reference && opts.kl_c3 > 0.0) {
        net::ForwardResult ref = net::forward(*opts.kl_reference, low_obs);
        r = rl::kl_shaped_reward(r, low_dist, ref.dist, opts.kl_c3);
      }
      rec.low.transitions.back().reward = r;
      rec.low.transitions.back().done = res.outcome.terminal();
    } else if (low_was_recording && !rec.low.transitions.empty()) {
      // The drone was reassigned away from the refined skill: close the
      // segment so advantage estimation doesn't bridge the gap.
      rec.low.transitions.back().done = true;
    }
    low_was_recording = low_recorded;

    if (opts.record_replay)
      rec.frames.push_back(game::make_replay_record(state, res.events,
                                                    res.outcome, env.backend));

    if (res.outcome.terminal()) {
      rec.outcome = res.outcome;
      break;
    }
    decision_pending = game::high_level_trigger(res.events);
  }
  return rec;
}

}  // namespace hcsp::strategy
