#ifndef HCSP_CONFIG_HPP_
#define HCSP_CONFIG_HPP_

#include <string>
#include <vector>

#include "hcsp/selfplay.hpp"

namespace hcsp::config {

// Full run configuration. Serializes to JSON losslessly; unknown keys are
// rejected at load time so typos fail loudly instead of silently using a
// default.
struct RunConfig {
  std::string preset = "desk_scale";

  // Environment
  std::string backend = "kinematic";  // or "quadrotor"
  double init_noise_scale = 0.0;
  int observation_delay_steps = 0;
  int max_steps = 750;
  std::array<double, 2> restitution_range{0.8, 0.8};

  // Stage I skill training
  rl::PpoConfig skill_ppo;
  std::vector<int> skill_hidden{64, 64};
  int skill_iterations = 40;
  int skill_episodes_per_iteration = 16;
  int skill_eval_episodes = 8;
  int skill_eval_interval = 5;

  selfplay::Stage2Config stage2;
  selfplay::Stage3Config stage3;

  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs";

  // Scale bookkeeping: documents the published setting even where this
  // implementation cannot execute it on a desk machine.
  int num_envs = 1;
  long long train_steps = 0;
  int skill_max_episode_length = 250;
  int high_max_episode_length = 750;

  static RunConfig preset_config(const std::string& name);
  static RunConfig from_json_text(const std::string& text);
  static RunConfig load_file(const std::string& path);
  std::string to_json_text() const;
  std::string hash() const;  // stable content hash of the serialized form

  game::EnvOptions env_options() const;
  skills::SkillTrainConfig skill_train_config(std::uint64_t seed) const;
};

// HCSP_SEED replaces the seed list with a single seed; HCSP_OUTPUT_DIR
// replaces the output directory.
void apply_env_overrides(RunConfig& config);

// FNV-1a over a file's raw bytes, hex-encoded. Throws when unreadable.
std::string file_hash(const std::string& path);

struct ArtifactEntry {
  std::string path;
  std::string hash;
  std::uint64_t bytes = 0;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string code_version;
  double wall_seconds = 0.0;
  std::vector<ArtifactEntry> artifacts;

  void add_artifact(const std::string& path);
  std::string to_json_text() const;
  // True when every referenced artifact still exists with a matching hash.
  bool verify() const;
};

// Policy directory convention: optional high.ckpt plus one <skill>.ckpt (and
// <skill>.2.ckpt, ... for later variants) per trained skill. "bot" loads the
// rule-based strategy with no trained skills.
strategy::HierarchicalTeamPolicy load_policy(const std::string& ref);
void save_policy(const strategy::HierarchicalTeamPolicy& policy,
                 const std::string& dir, RunManifest* manifest = nullptr);

}  // namespace hcsp::config

#endif  // HCSP_CONFIG_HPP_
