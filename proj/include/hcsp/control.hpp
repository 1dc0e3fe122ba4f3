#ifndef HCSP_CONTROL_HPP_
#define HCSP_CONTROL_HPP_

#include "hcsp/game.hpp"

namespace hcsp::control {

using game::DroneCommand;
using game::GameState;

// Kinematic proportional-derivative position hold / goto. Returns the
// normalized command encoding (values in [0,1]).
DroneCommand kinematic_goto(const GameState& state, int drone,
                            const Vec3& target, const game::EnvOptions& env,
                            double kp = 4.0, double kd = 3.0);

// Quadrotor cascade: position PD -> desired thrust vector -> attitude P ->
// rotor mixing. Keeps a parked drone at its target and flies slow moves.
DroneCommand quad_position_hold(const GameState& state, int drone,
                                const Vec3& target, const game::EnvOptions& env);

// Predicted ball xy when it descends to the given height (ballistic, no
// contacts). Returns current xy when the ball never reaches the height.
Vec3 predict_ball_at_height(const game::BallState& ball, double height);

}  // namespace hcsp::control

#endif  // HCSP_CONTROL_HPP_
