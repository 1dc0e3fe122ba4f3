#include <stdexcept>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hcsp/config.hpp"
#include "hcsp/replay.hpp"
#include "json.hpp"

using namespace hcsp;
using namespace hcsp::config;
using nlohmann::json;

namespace {

std::string temp_dir(const char* tag) {
  std::string d = std::string("/tmp/hcsp_cfg_test_") + tag;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("run config serializes losslessly") {
  RunConfig c;
  c.backend = "quadrotor";
  c.init_noise_scale = 0.25;
  c.seeds = {3, 5, 8};
  c.stage2.win_rate_threshold = 0.85;
  c.stage3.max_iterations = 17;
  c.skill_ppo.gamma = 0.97;

  RunConfig back = RunConfig::from_json_text(c.to_json_text());
  CHECK(back.to_json_text() == c.to_json_text());
  CHECK(back.backend == "quadrotor");
  CHECK(back.seeds == c.seeds);
  CHECK(back.stage2.win_rate_threshold == 0.85);
  CHECK(back.stage3.max_iterations == 17);
  CHECK(back.skill_ppo.gamma == 0.97);
  CHECK(back.hash() == c.hash());
}

TEST_CASE("unknown keys are rejected, top-level and nested") {
  RunConfig c;
  json j = json::parse(c.to_json_text());
  j["typo_key"] = 1;
  CHECK_THROWS_AS(RunConfig::from_json_text(j.dump()), std::invalid_argument);

  json j2 = json::parse(c.to_json_text());
  j2["stage2"]["win_rate_treshold"] = 0.9;
  CHECK_THROWS_AS(RunConfig::from_json_text(j2.dump()), std::invalid_argument);

  json j3 = json::parse(c.to_json_text());
  j3["skill_ppo"]["lr"] = 0.001;
  CHECK_THROWS_AS(RunConfig::from_json_text(j3.dump()), std::invalid_argument);
}

TEST_CASE("hash changes with content") {
  RunConfig a, b;
  b.max_steps = 751;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("paper-scale preset carries the published hyperparameters") {
  RunConfig p = RunConfig::preset_config("paper_scale");
  CHECK(p.skill_hidden == std::vector<int>{256, 128, 128});
  CHECK(p.num_envs == 4096);
  CHECK(p.train_steps == 1000000000LL);
  CHECK(p.skill_max_episode_length == 500);
  CHECK(p.high_max_episode_length == 1500);
  CHECK(p.skill_ppo.buffer_length == 64);
  CHECK(p.skill_ppo.minibatches == 16);
  CHECK(p.skill_ppo.epochs == 4);
  CHECK(p.skill_ppo.clip == 0.1);
  CHECK(p.skill_ppo.entropy_coef == 0.001);
  CHECK(p.skill_ppo.max_grad_norm == 10.0);
  CHECK(p.skill_ppo.gae_lambda == 0.95);
  CHECK(p.skill_ppo.gamma == 0.995);
  CHECK(p.skill_ppo.actor_lr == 5e-4);
  CHECK(p.stage2.win_rate_threshold == 0.9);
  CHECK(p.stage2.max_population == 5);
  CHECK(p.stage2.ppo.actor_lr == 1e-4);
  CHECK(p.stage3.max_iterations == 4000);
  CHECK(p.stage3.checkpoint_interval == 1000);
  CHECK(p.stage3.accept_threshold == 0.7);
  CHECK(p.stage3.kl.c3 == 1e-4);

  CHECK(RunConfig::preset_config("desk_scale").num_envs == 1);
  CHECK_THROWS_AS(RunConfig::preset_config("warehouse_scale"),
                  std::invalid_argument);
}

TEST_CASE("environment overrides replace seed list and output dir") {
  RunConfig c;
  c.seeds = {1, 2, 3};
  c.output_dir = "runs";
  setenv("HCSP_SEED", "99", 1);
  setenv("HCSP_OUTPUT_DIR", "/tmp/somewhere", 1);
  apply_env_overrides(c);
  unsetenv("HCSP_SEED");
  unsetenv("HCSP_OUTPUT_DIR");
  CHECK(c.seeds == std::vector<std::uint64_t>{99});
  CHECK(c.output_dir == "/tmp/somewhere");

  RunConfig untouched;
  untouched.seeds = {4};
  apply_env_overrides(untouched);  // no env vars set
  CHECK(untouched.seeds == std::vector<std::uint64_t>{4});
}

TEST_CASE("env options reflect the configured backend") {
  RunConfig c;
  c.backend = "kinematic";
  CHECK(c.env_options().backend == game::DynamicsBackend::Kinematic);
  c.backend = "quadrotor";
  CHECK(c.env_options().backend == game::DynamicsBackend::Quadrotor);
  c.backend = "antigravity";
  CHECK_THROWS_AS(c.env_options(), std::invalid_argument);
}

TEST_CASE("file hash is content-addressed") {
  std::string dir = temp_dir("hash");
  std::ofstream(dir + "/a.txt") << "hello";
  std::ofstream(dir + "/b.txt") << "hello";
  std::ofstream(dir + "/c.txt") << "hellp";
  CHECK(file_hash(dir + "/a.txt") == file_hash(dir + "/b.txt"));
  CHECK(file_hash(dir + "/a.txt") != file_hash(dir + "/c.txt"));
  CHECK_THROWS_AS(file_hash(dir + "/missing.txt"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("run manifest verifies artifacts and detects tampering") {
  std::string dir = temp_dir("manifest");
  std::ofstream(dir + "/out.csv") << "1,2,3\n";
  RunManifest m;
  m.command = "eval";
  m.add_artifact(dir + "/out.csv");
  CHECK(m.verify());
  std::ofstream(dir + "/out.csv") << "4,5,6\n";
  CHECK(!m.verify());
  json j = json::parse(m.to_json_text());
  CHECK(j["command"] == "eval");
  REQUIRE(j["artifacts"].size() == 1);
  CHECK(j["artifacts"][0]["path"] == dir + "/out.csv");
  std::filesystem::remove_all(dir);
}

TEST_CASE("policy directories round-trip skills, variants and extras") {
  std::string dir = temp_dir("policy");
  Rng rng(21);

  strategy::HierarchicalTeamPolicy p;
  p.name = "round_trip";
  net::MlpSpec high_spec;
  high_spec.input_dim = strategy::kHighObsDim;
  high_spec.hidden = {8};
  high_spec.head_kind = net::HeadKind::MultiCategorical;
  high_spec.head_sizes = strategy::DecodeOptions{}.head_sizes();
  p.high = net::PolicyParams::init(high_spec, rng);

  net::MlpSpec low_spec;
  low_spec.input_dim = skills::observation_dim(skills::SkillId::GoTo);
  low_spec.hidden = {8};
  low_spec.head_kind = net::HeadKind::Gaussian;
  low_spec.gaussian_dim = 4;
  p.skills[skills::SkillId::GoTo].push_back(
      net::PolicyParams::init(low_spec, rng));
  p.skills[skills::SkillId::GoTo].push_back(
      net::PolicyParams::init(low_spec, rng));

  strategy::ExtraOption extra;
  extra.head = 0;
  extra.skill = skills::SkillId::GoTo;
  extra.variant = 1;
  p.decode.extras.push_back(extra);

  save_policy(p, dir);
  strategy::HierarchicalTeamPolicy q = load_policy(dir);
  REQUIRE(q.high.has_value());
  CHECK(q.high->flat == p.high->flat);
  REQUIRE(q.skills.count(skills::SkillId::GoTo) == 1);
  REQUIRE(q.skills[skills::SkillId::GoTo].size() == 2);
  CHECK(q.skills[skills::SkillId::GoTo][1].flat ==
        p.skills[skills::SkillId::GoTo][1].flat);
  REQUIRE(q.decode.extras.size() == 1);
  CHECK(q.decode.extras[0].skill == skills::SkillId::GoTo);
  CHECK(q.decode.extras[0].variant == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("the bot reference loads the rule-based policy") {
  auto bot = load_policy("bot");
  CHECK(!bot.high.has_value());
  CHECK(bot.skills.empty());
  CHECK(bot.allow_scripted_skills);
}

TEST_CASE("replay files round-trip an episode") {
  game::EnvOptions env;
  strategy::HierarchicalTeamPolicy a, b;
  strategy::EpisodeOptions opts;
  opts.seed = 71;
  opts.record_replay = true;
  strategy::EpisodeRecord rec = strategy::run_episode(a, b, env, opts);
  REQUIRE(!rec.frames.empty());

  std::string dir = temp_dir("replay");
  std::string path = dir + "/episode.replay";
  {
    std::ofstream os(path);
    game::write_replay(os, rec.frames);
  }
  std::ifstream is(path);
  auto frames = game::read_replay(is);
  REQUIRE(frames.size() == rec.frames.size());
  CHECK(frames.front().ball == rec.frames.front().ball);
  CHECK(frames.back().step == rec.frames.back().step);
  CHECK(frames.back().outcome.result == rec.frames.back().outcome.result);
  std::filesystem::remove_all(dir);
}
