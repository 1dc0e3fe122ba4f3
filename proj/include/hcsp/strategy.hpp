#ifndef HCSP_STRATEGY_HPP_
#define HCSP_STRATEGY_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hcsp/replay.hpp"
#include "hcsp/skills.hpp"

namespace hcsp::strategy {

using game::GameState;
using net::PolicyParams;
using skills::SkillId;
using skills::TacticalParams;

inline constexpr int kHighObsDim = 100;
inline const std::vector<int> kHeadSizes{6, 3, 4};

// Head option catalogs. Options that don't apply to the current phase decode
// to Hover so every action is total.
enum PassChoice {
  kServeLeft = 0,
  kServeRight,
  kReceive,
  kPassLeft,
  kPassRight,
  kPassHover,
};
enum SetChoice { kSet = 0, kSetHover, kSetGoToReady };
enum AttackChoice {
  kAttackLeft = 0,
  kAttackRight,
  kAttackHover,
  kAttackGoToReady,
};

struct HighLevelAction {
  int pass_choice = kPassHover;
  int set_choice = kSetHover;
  int attack_choice = kAttackHover;
};

// Extra head options appended by Stage III refinements: the base catalogs
// keep their indices, refined skill variants are appended per head.
struct ExtraOption {
  int head = 0;  // 0 pass, 1 set, 2 attack
  SkillId skill = SkillId::Pass;
  TacticalParams tactical;
  int variant = 1;  // index into the pool's variant list for the skill
};

struct DecodeOptions {
  Vec3 serve_anchor_left{3.0, 1.5, 0.0};   // opponent deep court, team-1 frame
  Vec3 serve_anchor_right{3.0, -1.5, 0.0};
  // Per-role rally stations for GoTo-ready (receiving formation by default).
  std::array<Vec3, 3> ready{Vec3{-2.0, 1.5, 1.5}, Vec3{-3.5, 0.0, 1.5},
                            Vec3{-2.0, -1.5, 1.5}};
  std::vector<ExtraOption> extras;

  std::vector<int> head_sizes() const;  // {6, 3, 4} plus extras per head
};

// One drone's current order: which skill to run and with what parameters.
// Tactical targets are expressed in the canonical team-1 frame.
struct Assignment {
  SkillId skill = SkillId::GoTo;
  TacticalParams tactical;
  int variant = 0;  // skill-pool variant (0 = the Stage I original)
};

// 180-degree rotation about z mapping team 2's world into the canonical
// team-1 frame (and back; the map is an involution). Kinematic roots keep
// their placeholder attitude: they are attitudeless by construction.
game::DroneRootState mirror_root(const game::DroneRootState& root,
                                 game::DynamicsBackend backend);
game::BallState mirror_ball(const game::BallState& ball);
game::DroneCommand mirror_kinematic_command(const game::DroneCommand& cmd);

// 100-dim centralized observation: teammates first, both teams expressed in
// the acting team's canonical frame.
std::vector<double> build_high_obs(const GameState& state, game::Team team,
                                   game::DynamicsBackend backend);

std::array<Assignment, 3> decode_action(const HighLevelAction& action,
                                        game::Phase phase, bool we_serve,
                                        const DecodeOptions& opts = {});

// Rule-based opponent: serve, then pass -> set -> attack, idle roles hover.
HighLevelAction bot_policy(const GameState& state, game::Team team);

// Variant lists are append-only: index 0 is the Stage I original, later
// entries are accepted Stage III refinements.
using SkillPool = std::map<SkillId, std::vector<PolicyParams>>;

struct HierarchicalTeamPolicy {
  std::optional<PolicyParams> high;  // nullopt: rule-based bot
  SkillPool skills;  // missing entries fall back to the scripted controllers
  DecodeOptions decode;
  bool allow_scripted_skills = true;
  std::string name = "anon";
};

// Stable content hash of a skill pool (spec + weights); embedded in strategy
// checkpoints so a mismatched pool is detected at load time.
std::string pool_manifest_hash(const SkillPool& pool);

struct EpisodeOptions {
  std::uint64_t seed = 0;
  Rng* high_rng = nullptr;  // null: argmax decode
  Rng* low_rng = nullptr;   // null: mean actions
  rl::HighLevelRewardConfig reward;
  bool record_high = false;
  // Stage III low-level recording (team 1 only): transitions of the drone
  // executing record_skill, reward shaped by the KL term against kl_reference.
  std::optional<SkillId> record_skill;
  const PolicyParams* kl_reference = nullptr;
  double kl_c3 = 0.0;
  bool record_replay = false;
};

struct EpisodeRecord {
  game::Outcome outcome;
  int steps = 0;
  std::array<int, 2> decision_counts{};
  std::array<int, 2> racket_hits{};
  // Per-team per-step high-level stream; decision steps carry obs/action and
  // event_step = true (sample reallocation turns this into macro-steps).
  std::array<rl::Trajectory, 2> high;
  rl::Trajectory low;
  std::vector<game::ReplayRecord> frames;
};

EpisodeRecord run_episode(const HierarchicalTeamPolicy& team1,
                          const HierarchicalTeamPolicy& team2,
                          const game::EnvOptions& env,
                          const EpisodeOptions& opts);

}  // namespace hcsp::strategy

#endif  // HCSP_STRATEGY_HPP_
