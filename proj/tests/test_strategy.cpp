#include <stdexcept>
#include "doctest.h"
#include "hcsp/strategy.hpp"

using namespace hcsp;
using namespace hcsp::strategy;
using game::DynamicsBackend;
using game::EnvOptions;
using game::GameState;
using game::Phase;
using game::Team;
using skills::SkillId;

TEST_CASE("high-level observation has 100 dimensions for both teams") {
  EnvOptions env;
  GameState s = game::reset(env, 17, Team::Team1);
  auto o1 = build_high_obs(s, Team::Team1, env.backend);
  auto o2 = build_high_obs(s, Team::Team2, env.backend);
  CHECK(o1.size() == kHighObsDim);
  CHECK(o2.size() == kHighObsDim);
  for (double v : o1) CHECK(std::isfinite(v));
}

TEST_CASE("mirroring is an involution on roots, balls and commands") {
  Rng rng(71);
  for (int i = 0; i < 20; ++i) {
    dyn::KinematicDroneState kin;
    kin.position = {rng.uniform(-6, 6), rng.uniform(-3, 3), rng.uniform(0, 5)};
    kin.velocity = {rng.normal(), rng.normal(), rng.normal()};
    game::DroneRootState root = dyn::kinematic_root_state(kin);
    game::DroneRootState twice = mirror_root(
        mirror_root(root, DynamicsBackend::Kinematic),
        DynamicsBackend::Kinematic);
    for (int k = 0; k < 23; ++k)
      CHECK(twice[k] == doctest::Approx(root[k]).epsilon(1e-14));

    game::BallState ball;
    ball.position = kin.position;
    ball.velocity = kin.velocity;
    game::BallState b2 = mirror_ball(mirror_ball(ball));
    CHECK((b2.position - ball.position).norm() < 1e-14);
    CHECK((b2.velocity - ball.velocity).norm() < 1e-14);

    game::DroneCommand cmd;
    cmd.values = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    game::DroneCommand c2 = mirror_kinematic_command(
        mirror_kinematic_command(cmd));
    for (int k = 0; k < 4; ++k)
      CHECK(c2.values[k] == doctest::Approx(cmd.values[k]).epsilon(1e-14));
  }
}

TEST_CASE("mirroring rotates positions 180 degrees about z") {
  dyn::KinematicDroneState kin;
  kin.position = {2.0, 1.0, 1.5};
  kin.velocity = {1.0, -0.5, 0.25};
  auto m = mirror_root(dyn::kinematic_root_state(kin),
                       DynamicsBackend::Kinematic);
  CHECK(m[0] == doctest::Approx(-2.0));
  CHECK(m[1] == doctest::Approx(-1.0));
  CHECK(m[2] == doctest::Approx(1.5));   // z unchanged
  CHECK(m[7] == doctest::Approx(-1.0));  // vx
  CHECK(m[8] == doctest::Approx(0.5));   // vy
  CHECK(m[9] == doctest::Approx(0.25));

  game::BallState ball;
  ball.position = {3.0, -2.0, 4.0};
  ball.velocity = {-1.0, 2.0, -3.0};
  game::BallState b = mirror_ball(ball);
  CHECK(b.position.x == doctest::Approx(-3.0));
  CHECK(b.position.y == doctest::Approx(2.0));
  CHECK(b.position.z == doctest::Approx(4.0));
  CHECK(b.velocity.z == doctest::Approx(-3.0));
}

TEST_CASE("mirror symmetry: team observations coincide on mirrored states") {
  // Build a state, then swap the two teams' drones through the mirror map and
  // mirror the ball: team 2's view of the swapped state must equal team 1's
  // view of the original.
  EnvOptions env;
  Rng rng(19);
  GameState s = game::reset(env, 23, Team::Team1);
  for (auto& d : s.drones) {
    d.kin.position.x += rng.uniform(-0.5, 0.5);
    d.kin.position.y += rng.uniform(-0.5, 0.5);
    d.kin.velocity = {rng.normal(), rng.normal(), rng.normal()};
  }
  s.ball.position = {1.2, -0.8, 3.0};
  s.ball.velocity = {-2.0, 0.5, 1.0};
  s.phase = Phase::Rally;
  s.ball_side = Team::Team1;

  GameState t = s;
  auto rotate = [](dyn::KinematicDroneState k) {
    k.position.x = -k.position.x;
    k.position.y = -k.position.y;
    k.velocity.x = -k.velocity.x;
    k.velocity.y = -k.velocity.y;
    return k;
  };
  for (int i = 0; i < 3; ++i) {
    t.drones[i].kin = rotate(s.drones[i + 3].kin);
    t.drones[i + 3].kin = rotate(s.drones[i].kin);
  }
  t.ball = mirror_ball(s.ball);
  t.ball_side = Team::Team2;
  t.serving_team = game::other_team(s.serving_team);
  t.team_hit_counts = {s.team_hit_counts[1], s.team_hit_counts[0]};

  auto view1 = build_high_obs(s, Team::Team1, env.backend);
  auto view2 = build_high_obs(t, Team::Team2, env.backend);
  REQUIRE(view1.size() == view2.size());
  for (size_t i = 0; i < view1.size(); ++i)
    CHECK(view1[i] == doctest::Approx(view2[i]).epsilon(1e-12));
}

TEST_CASE("decode is total over the whole action space") {
  DecodeOptions opts;
  auto sizes = opts.head_sizes();
  REQUIRE(sizes == kHeadSizes);
  for (int p = 0; p < sizes[0]; ++p)
    for (int s = 0; s < sizes[1]; ++s)
      for (int a = 0; a < sizes[2]; ++a)
        for (Phase phase : {Phase::Serve, Phase::Rally})
          for (bool serve : {true, false}) {
            HighLevelAction act{p, s, a};
            auto plan = decode_action(act, phase, serve, opts);
            for (const auto& order : plan) {
              // every order names a real skill with a base variant
              CHECK(skills::observation_dim(order.skill) > 0);
              CHECK(order.variant == 0);
            }
          }
}

TEST_CASE("serve choices only matter when actually serving") {
  DecodeOptions opts;
  HighLevelAction act{kServeLeft, kSetHover, kAttackHover};
  auto serving = decode_action(act, Phase::Serve, true, opts);
  CHECK(serving[0].skill == SkillId::Serve);

  auto receiving = decode_action(act, Phase::Serve, false, opts);
  CHECK(receiving[0].skill != SkillId::Serve);
}

TEST_CASE("pass sides route through the tactical parameters") {
  DecodeOptions opts;
  auto left = decode_action({kPassLeft, kSet, kAttackLeft}, Phase::Rally, false,
                            opts);
  auto right = decode_action({kPassRight, kSet, kAttackRight}, Phase::Rally,
                             false, opts);
  CHECK(left[0].skill == SkillId::Pass);
  CHECK(right[0].skill == SkillId::Pass);
  CHECK(left[0].tactical.pass_side != right[0].tactical.pass_side);
  CHECK(left[2].tactical.attack_direction != right[2].tactical.attack_direction);
}

TEST_CASE("extra head options route to their refined variant") {
  DecodeOptions opts;
  ExtraOption extra;
  extra.head = 1;
  extra.skill = SkillId::Set;
  extra.variant = 1;
  opts.extras.push_back(extra);
  auto sizes = opts.head_sizes();
  CHECK(sizes[1] == kHeadSizes[1] + 1);

  HighLevelAction act{kPassHover, sizes[1] - 1, kAttackHover};
  auto plan = decode_action(act, Phase::Rally, false, opts);
  CHECK(plan[1].skill == SkillId::Set);
  CHECK(plan[1].variant == 1);
}

TEST_CASE("bot policy serves and otherwise plays pass-set-attack") {
  EnvOptions env;
  GameState s = game::reset(env, 5, Team::Team1);
  HighLevelAction serve = bot_policy(s, Team::Team1);
  CHECK((serve.pass_choice == kServeLeft || serve.pass_choice == kServeRight));

  s.phase = Phase::Rally;
  s.ball_side = Team::Team1;
  s.team_hit_counts[0] = 0;
  HighLevelAction rally = bot_policy(s, Team::Team1);
  CHECK((rally.pass_choice == kPassLeft || rally.pass_choice == kPassRight ||
         rally.pass_choice == kReceive));
}

TEST_CASE("bot versus bot episodes terminate with a valid outcome") {
  EnvOptions env;
  HierarchicalTeamPolicy bot1, bot2;
  bot1.name = "bot1";
  bot2.name = "bot2";
  EpisodeOptions opts;
  opts.seed = 101;
  EpisodeRecord rec = run_episode(bot1, bot2, env, opts);
  CHECK(rec.outcome.terminal());
  CHECK(rec.steps > 0);
  CHECK(rec.steps <= env.max_steps);
  CHECK(rec.decision_counts[0] > 0);
  CHECK(rec.decision_counts[1] > 0);
}

TEST_CASE("episodes are reproducible for a fixed seed") {
  EnvOptions env;
  HierarchicalTeamPolicy a, b;
  EpisodeOptions opts;
  opts.seed = 202;
  EpisodeRecord r1 = run_episode(a, b, env, opts);
  EpisodeRecord r2 = run_episode(a, b, env, opts);
  CHECK(r1.steps == r2.steps);
  CHECK(r1.outcome.result == r2.outcome.result);
  CHECK(r1.racket_hits == r2.racket_hits);
}

TEST_CASE("recorded high-level streams mark decision steps as events") {
  EnvOptions env;
  // recording needs actual networks on both sides; bots have no stream
  net::MlpSpec spec;
  spec.input_dim = kHighObsDim;
  spec.hidden = {8};
  spec.head_kind = net::HeadKind::MultiCategorical;
  spec.head_sizes = DecodeOptions{}.head_sizes();
  Rng rng(66);
  HierarchicalTeamPolicy a, b;
  a.high = net::PolicyParams::init(spec, rng);
  b.high = net::PolicyParams::init(spec, rng);
  EpisodeOptions opts;
  opts.seed = 303;
  opts.record_high = true;
  Rng high_rng(67);
  opts.high_rng = &high_rng;
  EpisodeRecord rec = run_episode(a, b, env, opts);
  for (int team = 0; team < 2; ++team) {
    const auto& ts = rec.high[team].transitions;
    REQUIRE(!ts.empty());
    CHECK(static_cast<int>(ts.size()) == rec.steps);
    int events = 0;
    for (size_t i = 1; i < ts.size(); ++i) events += ts[i].event_step ? 1 : 0;
    // decision steps beyond the initial one are exactly the event steps
    CHECK(events + 1 == rec.decision_counts[team]);
    CHECK(ts.back().done);
  }
}

TEST_CASE("pool manifest hash is sensitive to weights and keys") {
  net::MlpSpec spec;
  spec.input_dim = 26;
  spec.hidden = {8};
  spec.head_kind = net::HeadKind::Gaussian;
  spec.gaussian_dim = 4;
  Rng rng(33);
  SkillPool pool;
  pool[SkillId::GoTo].push_back(net::PolicyParams::init(spec, rng));
  std::string h1 = pool_manifest_hash(pool);

  SkillPool pool2 = pool;
  pool2[SkillId::GoTo][0].flat[0] += 1e-9;
  CHECK(pool_manifest_hash(pool2) != h1);

  SkillPool pool3 = pool;
  pool3[SkillId::Pass].push_back(pool[SkillId::GoTo][0]);
  CHECK(pool_manifest_hash(pool3) != h1);

  CHECK(pool_manifest_hash(pool) == h1);  // deterministic
}

TEST_CASE("replay frames are captured when requested") {
  EnvOptions env;
  HierarchicalTeamPolicy a, b;
  EpisodeOptions opts;
  opts.seed = 404;
  opts.record_replay = true;
  EpisodeRecord rec = run_episode(a, b, env, opts);
  CHECK(static_cast<int>(rec.frames.size()) == rec.steps);
}
