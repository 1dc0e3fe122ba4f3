#ifndef HCSP_GAME_HPP_
#define HCSP_GAME_HPP_

#include <array>
#include <optional>
#include <vector>

#include "hcsp/dynamics.hpp"
#include "hcsp/math3d.hpp"

namespace hcsp::game {

using dyn::DroneRootState;
using dyn::KinematicDroneState;
using dyn::RigidBodyState;
using dyn::RotorCommand;

enum class Team { Team1 = 0, Team2 = 1 };

inline Team other_team(Team t) {
  return t == Team::Team1 ? Team::Team2 : Team::Team1;
}
inline Team team_of_drone(int drone) {
  return drone < 3 ? Team::Team1 : Team::Team2;
}
// Team 1 owns x < 0, team 2 owns x > 0.
inline double side_sign(Team t) { return t == Team::Team1 ? -1.0 : 1.0; }

struct CourtSpec {
  double half_length = 6.0;  // x in [-6, 6]
  double half_width = 3.0;   // y in [-3, 3]
  double net_height = 2.43;  // net plane at x = 0

  bool in_court(const Vec3& p) const {
    return std::abs(p.x) <= half_length && std::abs(p.y) <= half_width;
  }
};

struct BallState {
  Vec3 position;
  Vec3 velocity;
  double radius = 0.1;
  double mass = 0.005;
  double restitution = 0.8;
};

struct RacketSpec {
  double radius = 0.2;
  double restitution = 0.8;
  double mount_offset = 0.05;  // along the drone's up vector
};

struct GameEvent {
  enum class Kind {
    RacketHit,     // actor = drone index
    NetCross,      // actor = 0 (toward team1 side) or 1 (toward team2 side)
    BallGround,    // actor = side the ball landed on (Team as int)
    BallOut,       // actor = team responsible (last hitter)
    NetContact,    // actor = team responsible
    DroneGround,   // actor = drone index
    DroneCrossNet, // actor = drone index
    IllegalHit,    // actor = team responsible
    Timeout,       // actor unused
  };
  Kind kind;
  int actor = -1;
  int step = 0;
};

struct Outcome {
  enum class Result { Ongoing, Win, Draw };
  Result result = Result::Ongoing;
  Team winner = Team::Team1;  // valid only when result == Win

  static Outcome ongoing() { return {}; }
  static Outcome win(Team t) { return {Result::Win, t}; }
  static Outcome draw() { return {Result::Draw, Team::Team1}; }
  bool terminal() const { return result != Result::Ongoing; }
};

enum class Phase { Serve, Rally, Terminal };
enum class DynamicsBackend { Quadrotor, Kinematic };

struct Formation {
  // Team-1 frame positions (x < 0); team 2 uses the 180-degree rotation.
  // Index 0 = pass role, 1 = set role, 2 = attack role.
  std::array<Vec3, 3> serving{Vec3{-5.7, 0.0, 1.5}, Vec3{-2.5, 1.0, 1.5},
                              Vec3{-2.0, -1.5, 1.5}};
  std::array<Vec3, 3> receiving{Vec3{-2.0, 1.5, 1.5}, Vec3{-3.5, 0.0, 1.5},
                                Vec3{-2.0, -1.5, 1.5}};
};

struct EnvOptions {
  CourtSpec court;
  RacketSpec racket;
  Formation formation;
  double init_noise_scale = 0.0;                   // m, on the serve drop point
  std::array<double, 2> restitution_range{0.8, 0.8};
  int observation_delay_steps = 0;
  DynamicsBackend backend = DynamicsBackend::Kinematic;
  int max_steps = 750;  // 15 s at 50 Hz
  double drone_ground_threshold = 0.1;
  double drone_body_radius = 0.15;
  dyn::KinematicParams kinematic;
  dyn::QuadrotorParams quadrotor = dyn::QuadrotorParams::default_params();
  double dt = dyn::kControlDt;
};

// One drone's simulation state; which member is live depends on the backend.
struct DroneSim {
  RigidBodyState body;
  KinematicDroneState kin;
  RotorCommand last_cmd;
};

// Backend-agnostic drone command. Quadrotor: four normalized rotor thrusts
// in [0,1]. Kinematic: first three values in [0,1] mapped affinely to
// accelerations in [-max_accel, max_accel]; the fourth is ignored.
struct DroneCommand {
  std::array<double, 4> values{0.5, 0.5, 0.5, 0.5};
};

struct GameState {
  std::array<DroneSim, 6> drones;  // 0-2 team 1, 3-5 team 2
  BallState ball;
  std::optional<int> last_hitter;        // cleared on net crossing
  std::optional<Team> last_touch_team;   // persists across net crossings
  std::array<int, 2> team_hit_counts{0, 0};
  std::array<bool, 6> hit_flags{};  // per-drone hits in the current exchange
  Team ball_side = Team::Team1;  // team that must play the ball
  Phase phase = Phase::Serve;
  Team serving_team = Team::Team1;
  int step_count = 0;
  std::uint64_t rng_state = 0;  // seed used at reset

  DroneRootState drone_root(int i, DynamicsBackend backend) const;
  Vec3 drone_position(int i, DynamicsBackend backend) const;
  Vec3 drone_velocity(int i, DynamicsBackend backend) const;
  Vec3 drone_up(int i, DynamicsBackend backend) const;
};

GameState reset(const EnvOptions& options, std::uint64_t seed,
                std::optional<Team> serving_team = std::nullopt);

struct StepResult {
  std::vector<GameEvent> events;
  Outcome outcome;
};

// Advances the match one control step. Throws std::logic_error when called
// on a Terminal state.
StepResult step(GameState& state, const std::array<DroneCommand, 6>& commands,
                const EnvOptions& options);

// Reflects the ball off a racket disk when the ball sphere intersects it
// while approaching. Returns the post-contact ball otherwise nullopt.
std::optional<BallState> racket_collision(const BallState& ball,
                                          const DroneRootState& drone,
                                          const RacketSpec& racket);

Outcome rules_check(const GameState& state,
                    const std::vector<GameEvent>& events);

bool high_level_trigger(const std::vector<GameEvent>& events);

}  // namespace hcsp::game

#endif  // HCSP_GAME_HPP_
