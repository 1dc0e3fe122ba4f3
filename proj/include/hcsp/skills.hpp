#ifndef HCSP_SKILLS_HPP_
#define HCSP_SKILLS_HPP_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hcsp/game.hpp"
#include "hcsp/rl.hpp"

namespace hcsp::skills {

using game::GameEvent;
using game::GameState;
using net::PolicyParams;

enum class SkillId {
  Serve,
  Receive,
  Pass,
  Set,
  Attack,
  HoverServe,
  HoverReceive,
  HoverPass,
  HoverSet,
  HoverAttack,
  GoTo,
};

std::string skill_name(SkillId id);
SkillId skill_from_name(const std::string& name);
bool is_hover(SkillId id);
bool is_ball_skill(SkillId id);
SkillId hover_for(SkillId preceding);

// Formation role (0 pass, 1 set, 2 attack) that normally executes the skill.
int role_of(SkillId id);

// Ball-playing legality for a drone under the current rally state.
bool hit_permitted(const GameState& state, int drone);

struct TacticalParams {
  Vec3 serve_target{3.0, 1.5, 0.0};
  int pass_side = 0;         // 0 left, 1 right
  int attack_direction = 0;  // 0 left, 1 right
  SkillId hover_preceding = SkillId::Serve;
  Vec3 goto_target{-2.0, 0.0, 1.5};
};

// Observation dimensions: Serve 37, Receive/Set 34, Attack/Pass 36,
// Hover/GoTo 26.
int observation_dim(SkillId id);

std::vector<double> build_observation(SkillId skill,
                                      const game::DroneRootState& drone,
                                      const game::BallState& ball,
                                      const TacticalParams& tactical,
                                      bool hit_permission);

enum class RewardPhase { BeforeHit, AfterHit, End };

// Context handed to each reward term evaluator at every step.
struct SkillStepContext {
  const GameState* prev = nullptr;
  const GameState* cur = nullptr;
  const std::vector<GameEvent>* events = nullptr;
  game::Outcome outcome;
  int trainee = 0;
  game::DynamicsBackend backend = game::DynamicsBackend::Kinematic;
  TacticalParams tactical;
  Vec3 anchor;        // skill-specific target point for the ball
  Vec3 ideal_point;   // drone's ideal position during the before-hit phase
  Vec3 hover_target;
  double ball_peak = 0.0;              // running max ball altitude
  bool trainee_hit_this_step = false;  // trainee racket contact this step
  bool trainee_hit_any = false;        // has hit at any point this episode
  bool body_contact_any = false;       // ball touched the drone body, no racket
  bool trainee_grounded_any = false;   // drone hit the ground at some point
  bool terminal = false;
  std::array<double, 4> last_command{0.5, 0.5, 0.5, 0.5};
};

struct RewardTerm {
  std::string name;
  RewardPhase phase;
  bool sparse;
  double lo, hi;
  std::function<double(const SkillStepContext&)> evaluator;
};

struct SkillTask {
  SkillId skill;
  TacticalParams tactical;
  std::vector<RewardTerm> terms;
  Vec3 anchor;
  Vec3 ideal_point;
  Vec3 hover_target;
  int trainee = 0;  // drone index (team 1)
  std::vector<SkillId> prerequisites;
  int episode_steps = 250;  // cap on the trainee's control window
  double set_init_sigma = 0.3;  // Gaussian ball init spread for Set/Attack
};

SkillTask make_skill_task(SkillId id, const game::EnvOptions& env,
                          const TacticalParams& tactical = {});

// Stateful per-episode reward engine: phase machine plus one-shot latches
// for sparse terms.
class SkillRewardEngine {
 public:
  explicit SkillRewardEngine(const SkillTask& task);
  void reset();
  double step(SkillStepContext& ctx);  // updates phase/latches in ctx + self
  RewardPhase phase() const { return phase_; }

 private:
  const SkillTask& task_;
  RewardPhase phase_ = RewardPhase::BeforeHit;
  bool has_post_ = false;  // any after-hit/end terms (hover tasks have none)
  std::vector<bool> fired_;
};

// Scripted kinematic-mode behavior for a skill (used by the rule-based bot
// and as training context fallback).
game::DroneCommand scripted_skill_command(const GameState& state, int drone,
                                          SkillId skill,
                                          const TacticalParams& tactical,
                                          const game::EnvOptions& env);

struct SkillEpisodeResult {
  rl::Trajectory trajectory;  // trainee transitions (empty for scripted runs)
  double total_reward = 0.0;
  double mean_step_reward = 0.0;
  int trainee_steps = 0;
  game::Outcome outcome;
};

// Runs one skill-task episode. When policy is null the trainee runs the
// scripted controller (oracle / smoke mode). A null action_rng runs the
// policy deterministically on the distribution mean. Prerequisite skills
// listed by the task run frozen from prereq, falling back to the scripted
// controller when allow_scripted_context is set.
SkillEpisodeResult run_skill_episode(
    const SkillTask& task, const PolicyParams* policy,
    const std::map<SkillId, PolicyParams>& prereq, const game::EnvOptions& env,
    std::uint64_t seed, Rng* action_rng, bool allow_scripted_context);

struct SkillTrainConfig {
  rl::PpoConfig ppo;
  std::vector<int> hidden{64, 64};
  int iterations = 40;
  int episodes_per_iteration = 16;
  int eval_episodes = 8;
  int eval_interval = 5;
  std::uint64_t seed = 0;
  bool allow_scripted_context = true;
};

struct SkillTrainResult {
  PolicyParams best_params;
  double best_eval_reward = 0.0;
  std::vector<double> train_curve;  // mean episode reward per iteration
  std::vector<double> eval_curve;
};

SkillTrainResult train_skill(const SkillTask& task,
                             const game::EnvOptions& env,
                             const SkillTrainConfig& config);

// Policy chaining: trains task with its prerequisite skills running frozen
// in-context. Throws when a prerequisite is missing and scripted context is
// disabled.
SkillTrainResult chain_train(const std::map<SkillId, PolicyParams>& prereq,
                             const SkillTask& task,
                             const game::EnvOptions& env,
                             const SkillTrainConfig& config);

// Mean per-step reward of the scripted proportional controller on the task;
// the independent yardstick for learning smoke checks.
double scripted_oracle_score(const SkillTask& task, const game::EnvOptions& env,
                             int episodes, std::uint64_t seed);

}  // namespace hcsp::skills

#endif  // HCSP_SKILLS_HPP_
