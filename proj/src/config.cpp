#include "hcsp/config.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hcsp::config {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::invalid_argument("unknown config key " + where + "." +
                                  it.key());
}

json ppo_to_json(const rl::PpoConfig& p) {
  return json{{"clip", p.clip},
              {"epochs", p.epochs},
              {"minibatches", p.minibatches},
              {"entropy_coef", p.entropy_coef},
              {"max_grad_norm", p.max_grad_norm},
              {"gae_lambda", p.gae_lambda},
              {"gamma", p.gamma},
              {"actor_lr", p.actor_lr},
              {"critic_lr", p.critic_lr},
              {"buffer_length", p.buffer_length},
              {"normalize_advantages", p.normalize_advantages},
              {"value_loss_coef", p.value_loss_coef},
              {"use_value_norm", p.use_value_norm}};
}

rl::PpoConfig ppo_from_json(const json& j, const std::string& where) {
  reject_unknown_keys(j,
                      {"clip", "epochs", "minibatches", "entropy_coef",
                       "max_grad_norm", "gae_lambda", "gamma", "actor_lr",
                       "critic_lr", "buffer_length", "normalize_advantages",
                       "value_loss_coef", "use_value_norm"},
                      where);
  rl::PpoConfig p;
  p.clip = j.value("clip", p.clip);
  p.epochs = j.value("epochs", p.epochs);
  p.minibatches = j.value("minibatches", p.minibatches);
  p.entropy_coef = j.value("entropy_coef", p.entropy_coef);
  p.max_grad_norm = j.value("max_grad_norm", p.max_grad_norm);
  p.gae_lambda = j.value("gae_lambda", p.gae_lambda);
  p.gamma = j.value("gamma", p.gamma);
  p.actor_lr = j.value("actor_lr", p.actor_lr);
  p.critic_lr = j.value("critic_lr", p.critic_lr);
  p.buffer_length = j.value("buffer_length", p.buffer_length);
  p.normalize_advantages =
      j.value("normalize_advantages", p.normalize_advantages);
  p.value_loss_coef = j.value("value_loss_coef", p.value_loss_coef);
  p.use_value_norm = j.value("use_value_norm", p.use_value_norm);
  return p;
}

json stage2_to_json(const selfplay::Stage2Config& s) {
  return json{{"win_rate_threshold", s.win_rate_threshold},
              {"min_updates", s.min_updates},
              {"max_updates", s.max_updates},
              {"max_population", s.max_population},
              {"eval_episodes", s.eval_episodes},
              {"gate_episodes", s.gate_episodes},
              {"episodes_per_update", s.episodes_per_update},
              {"hidden", s.hidden},
              {"ppo", ppo_to_json(s.ppo)},
              {"reward_c1", s.reward.c1},
              {"reward_c2", s.reward.c2},
              {"sample_reallocation", s.sample_reallocation},
              {"seed", s.seed}};
}

selfplay::Stage2Config stage2_from_json(const json& j) {
  reject_unknown_keys(
      j,
      {"win_rate_threshold", "min_updates", "max_updates", "max_population",
       "eval_episodes", "gate_episodes", "episodes_per_update", "hidden",
       "ppo", "reward_c1", "reward_c2", "sample_reallocation", "seed"},
      "stage2");
  selfplay::Stage2Config s;
  s.win_rate_threshold = j.value("win_rate_threshold", s.win_rate_threshold);
  s.min_updates = j.value("min_updates", s.min_updates);
  s.max_updates = j.value("max_updates", s.max_updates);
  s.max_population = j.value("max_population", s.max_population);
  s.eval_episodes = j.value("eval_episodes", s.eval_episodes);
  s.gate_episodes = j.value("gate_episodes", s.gate_episodes);
  s.episodes_per_update = j.value("episodes_per_update", s.episodes_per_update);
  s.hidden = j.value("hidden", s.hidden);
  if (j.contains("ppo")) s.ppo = ppo_from_json(j.at("ppo"), "stage2.ppo");
  s.reward.c1 = j.value("reward_c1", s.reward.c1);
  s.reward.c2 = j.value("reward_c2", s.reward.c2);
  s.sample_reallocation = j.value("sample_reallocation", s.sample_reallocation);
  s.seed = j.value("seed", s.seed);
  return s;
}

json stage3_to_json(const selfplay::Stage3Config& s) {
  std::vector<std::string> order;
  for (auto id : s.refinement_order) order.push_back(skills::skill_name(id));
  return json{{"max_iterations", s.max_iterations},
              {"checkpoint_interval", s.checkpoint_interval},
              {"accept_threshold", s.accept_threshold},
              {"refinement_order", order},
              {"kl_c3", s.kl.c3},
              {"low_ppo", ppo_to_json(s.low_ppo)},
              {"high_ppo", ppo_to_json(s.high_ppo)},
              {"reward_c1", s.reward.c1},
              {"reward_c2", s.reward.c2},
              {"episodes_per_iteration", s.episodes_per_iteration},
              {"eval_episodes", s.eval_episodes},
              {"joint_all_skills", s.joint_all_skills},
              {"seed", s.seed}};
}

selfplay::Stage3Config stage3_from_json(const json& j) {
  reject_unknown_keys(
      j,
      {"max_iterations", "checkpoint_interval", "accept_threshold",
       "refinement_order", "kl_c3", "low_ppo", "high_ppo", "reward_c1",
       "reward_c2", "episodes_per_iteration", "eval_episodes",
       "joint_all_skills", "seed"},
      "stage3");
  selfplay::Stage3Config s;
  s.max_iterations = j.value("max_iterations", s.max_iterations);
  s.checkpoint_interval = j.value("checkpoint_interval", s.checkpoint_interval);
  s.accept_threshold = j.value("accept_threshold", s.accept_threshold);
  if (j.contains("refinement_order")) {
    s.refinement_order.clear();
    for (const auto& name : j.at("refinement_order"))
      s.refinement_order.push_back(
          skills::skill_from_name(name.get<std::string>()));
  }
  s.kl.c3 = j.value("kl_c3", s.kl.c3);
  if (j.contains("low_ppo"))
    s.low_ppo = ppo_from_json(j.at("low_ppo"), "stage3.low_ppo");
  if (j.contains("high_ppo"))
    s.high_ppo = ppo_from_json(j.at("high_ppo"), "stage3.high_ppo");
  s.reward.c1 = j.value("reward_c1", s.reward.c1);
  s.reward.c2 = j.value("reward_c2", s.reward.c2);
  s.episodes_per_iteration =
      j.value("episodes_per_iteration", s.episodes_per_iteration);
  s.eval_episodes = j.value("eval_episodes", s.eval_episodes);
  s.joint_all_skills = j.value("joint_all_skills", s.joint_all_skills);
  s.seed = j.value("seed", s.seed);
  return s;
}

std::uint64_t fnv1a(const void* data, std::size_t n,
                    std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

RunConfig RunConfig::preset_config(const std::string& name) {
  RunConfig c;
  if (name == "desk_scale") {
    c.preset = name;
    return c;
  }
  if (name == "paper_scale") {
    // Published hyperparameters, verbatim. 4096 parallel environments and
    // 1e9 training steps are far beyond a desk machine; this preset exists
    // to keep the mapping auditable, not to be executed end to end.
    c.preset = name;
    c.skill_hidden = {256, 128, 128};
    c.skill_ppo = rl::PpoConfig{};  // Table values are the library defaults
    c.num_envs = 4096;
    c.train_steps = 1000000000LL;
    c.skill_max_episode_length = 500;
    c.high_max_episode_length = 1500;
    c.stage2.hidden = {256, 128, 128};
    c.stage2.ppo.minibatches = 16;
    c.stage2.min_updates = 100;    // min iteration steps 1.6384e6 / 16384
    c.stage2.max_updates = 10000;  // max iteration steps 1.6384e8 / 16384
    c.stage2.episodes_per_update = 512;
    c.stage3.max_iterations = 4000;
    c.stage3.checkpoint_interval = 1000;
    c.stage3.episodes_per_iteration = 64;  // 32768 sampled steps per iteration
    c.stage3.low_ppo.minibatches = 16;
    c.stage3.high_ppo.minibatches = 16;
    return c;
  }
  throw std::invalid_argument("unknown preset: " + name);
}

std::string RunConfig::to_json_text() const {
  json j;
  j["preset"] = preset;
  j["backend"] = backend;
  j["init_noise_scale"] = init_noise_scale;
  j["observation_delay_steps"] = observation_delay_steps;
  j["max_steps"] = max_steps;
  j["restitution_range"] = restitution_range;
  j["skill_ppo"] = ppo_to_json(skill_ppo);
  j["skill_hidden"] = skill_hidden;
  j["skill_iterations"] = skill_iterations;
  j["skill_episodes_per_iteration"] = skill_episodes_per_iteration;
  j["skill_eval_episodes"] = skill_eval_episodes;
  j["skill_eval_interval"] = skill_eval_interval;
  j["stage2"] = stage2_to_json(stage2);
  j["stage3"] = stage3_to_json(stage3);
  j["seeds"] = seeds;
  j["output_dir"] = output_dir;
  j["num_envs"] = num_envs;
  j["train_steps"] = train_steps;
  j["skill_max_episode_length"] = skill_max_episode_length;
  j["high_max_episode_length"] = high_max_episode_length;
  return j.dump(2);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  reject_unknown_keys(
      j,
      {"preset", "backend", "init_noise_scale", "observation_delay_steps",
       "max_steps", "restitution_range", "skill_ppo", "skill_hidden",
       "skill_iterations", "skill_episodes_per_iteration",
       "skill_eval_episodes", "skill_eval_interval", "stage2", "stage3",
       "seeds", "output_dir", "num_envs", "train_steps",
       "skill_max_episode_length", "high_max_episode_length"},
      "");
  RunConfig c = preset_config(j.value("preset", std::string("desk_scale")));
  c.backend = j.value("backend", c.backend);
  if (c.backend != "kinematic" && c.backend != "quadrotor")
    throw std::invalid_argument("unknown backend: " + c.backend);
  c.init_noise_scale = j.value("init_noise_scale", c.init_noise_scale);
  c.observation_delay_steps =
      j.value("observation_delay_steps", c.observation_delay_steps);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.restitution_range = j.value("restitution_range", c.restitution_range);
  if (j.contains("skill_ppo"))
    c.skill_ppo = ppo_from_json(j.at("skill_ppo"), "skill_ppo");
  c.skill_hidden = j.value("skill_hidden", c.skill_hidden);
  c.skill_iterations = j.value("skill_iterations", c.skill_iterations);
  c.skill_episodes_per_iteration =
      j.value("skill_episodes_per_iteration", c.skill_episodes_per_iteration);
  c.skill_eval_episodes = j.value("skill_eval_episodes", c.skill_eval_episodes);
  c.skill_eval_interval = j.value("skill_eval_interval", c.skill_eval_interval);
  if (j.contains("stage2")) c.stage2 = stage2_from_json(j.at("stage2"));
  if (j.contains("stage3")) c.stage3 = stage3_from_json(j.at("stage3"));
  c.seeds = j.value("seeds", c.seeds);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.num_envs = j.value("num_envs", c.num_envs);
  c.train_steps = j.value("train_steps", c.train_steps);
  c.skill_max_episode_length =
      j.value("skill_max_episode_length", c.skill_max_episode_length);
  c.high_max_episode_length =
      j.value("high_max_episode_length", c.high_max_episode_length);
  return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string RunConfig::hash() const {
  std::string text = to_json_text();
  return hex64(fnv1a(text.data(), text.size()));
}

game::EnvOptions RunConfig::env_options() const {
  game::EnvOptions env;
  if (backend == "quadrotor")
    env.backend = game::DynamicsBackend::Quadrotor;
  else if (backend == "kinematic")
    env.backend = game::DynamicsBackend::Kinematic;
  else
    throw std::invalid_argument("unknown backend: " + backend);
  env.init_noise_scale = init_noise_scale;
  env.observation_delay_steps = observation_delay_steps;
  env.max_steps = max_steps;
  env.restitution_range = restitution_range;
  return env;
}

skills::SkillTrainConfig RunConfig::skill_train_config(
    std::uint64_t seed) const {
  skills::SkillTrainConfig t;
  t.ppo = skill_ppo;
  t.hidden = skill_hidden;
  t.iterations = skill_iterations;
  t.episodes_per_iteration = skill_episodes_per_iteration;
  t.eval_episodes = skill_eval_episodes;
  t.eval_interval = skill_eval_interval;
  t.seed = seed;
  return t;
}

void apply_env_overrides(RunConfig& config) {
  if (const char* s = std::getenv("HCSP_SEED"))
    config.seeds = {std::strtoull(s, nullptr, 10)};
  if (const char* d = std::getenv("HCSP_OUTPUT_DIR")) config.output_dir = d;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash missing file: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  return hex64(h);
}

void RunManifest::add_artifact(const std::string& path) {
  ArtifactEntry e;
  e.path = path;
  e.hash = file_hash(path);
  e.bytes = static_cast<std::uint64_t>(fs::file_size(path));
  artifacts.push_back(std::move(e));
}

std::string RunManifest::to_json_text() const {
  json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["code_version"] = code_version;
  j["wall_seconds"] = wall_seconds;
  j["artifacts"] = json::array();
  for (const auto& a : artifacts)
    j["artifacts"].push_back(
        {{"path", a.path}, {"hash", a.hash}, {"bytes", a.bytes}});
  return j.dump(2);
}

bool RunManifest::verify() const {
  for (const auto& a : artifacts) {
    if (!fs::exists(a.path)) return false;
    if (file_hash(a.path) != a.hash) return false;
  }
  return true;
}

strategy::HierarchicalTeamPolicy load_policy(const std::string& ref) {
  strategy::HierarchicalTeamPolicy policy;
  if (ref == "bot") {
    policy.name = "bot";
    return policy;
  }
  if (!fs::is_directory(ref))
    throw std::runtime_error("policy ref is neither 'bot' nor a directory: " +
                             ref);
  policy.name = fs::path(ref).filename().string();
  fs::path high = fs::path(ref) / "high.ckpt";
  if (fs::exists(high)) policy.high = net::load_checkpoint(high.string(), nullptr);
  for (const char* name :
       {"serve", "receive", "pass", "set", "attack", "hover_serve",
        "hover_receive", "hover_pass", "hover_set", "hover_attack", "goto"}) {
    skills::SkillId id = skills::skill_from_name(name);
    for (int variant = 1;; ++variant) {
      fs::path p = fs::path(ref) / (variant == 1
                                        ? std::string(name) + ".ckpt"
                                        : std::string(name) + "." +
                                              std::to_string(variant) +
                                              ".ckpt");
      if (!fs::exists(p)) break;
      policy.skills[id].push_back(net::load_checkpoint(p.string(), nullptr));
    }
  }
  fs::path decode_path = fs::path(ref) / "decode.json";
  if (fs::exists(decode_path)) {
    std::ifstream in(decode_path);
    json j = json::parse(in);
    for (const auto& e : j.at("extras")) {
      strategy::ExtraOption opt;
      opt.head = e.at("head").get<int>();
      opt.skill = skills::skill_from_name(e.at("skill").get<std::string>());
      opt.variant = e.at("variant").get<int>();
      opt.tactical.pass_side = e.value("pass_side", 0);
      opt.tactical.attack_direction = e.value("attack_direction", 0);
      policy.decode.extras.push_back(opt);
    }
  }
  return policy;
}

void save_policy(const strategy::HierarchicalTeamPolicy& policy,
                 const std::string& dir, RunManifest* manifest) {
  fs::create_directories(dir);
  auto save = [&](const fs::path& path, const net::PolicyParams& params,
                  const std::string& kind) {
    net::save_checkpoint(path.string(), params,
                         {{"kind", kind},
                          {"policy", policy.name},
                          {"skill_pool_hash",
                           strategy::pool_manifest_hash(policy.skills)}});
    if (manifest) manifest->add_artifact(path.string());
  };
  if (policy.high) save(fs::path(dir) / "high.ckpt", *policy.high, "high");
  for (const auto& [id, variants] : policy.skills)
    for (std::size_t v = 0; v < variants.size(); ++v) {
      std::string base = skills::skill_name(id);
      fs::path p =
          fs::path(dir) /
          (v == 0 ? base + ".ckpt"
                  : base + "." + std::to_string(v + 1) + ".ckpt");
      save(p, variants[v], "skill:" + base);
    }
  if (!policy.decode.extras.empty()) {
    json j;
    j["extras"] = json::array();
    for (const auto& e : policy.decode.extras)
      j["extras"].push_back({{"head", e.head},
                             {"skill", skills::skill_name(e.skill)},
                             {"variant", e.variant},
                             {"pass_side", e.tactical.pass_side},
                             {"attack_direction", e.tactical.attack_direction}});
    fs::path p = fs::path(dir) / "decode.json";
    std::ofstream out(p);
    out << j.dump(2) << '\n';
    out.close();
    if (manifest) manifest->add_artifact(p.string());
  }
}

}  // namespace hcsp::config
