#ifndef HCSP_DYNAMICS_HPP_
#define HCSP_DYNAMICS_HPP_

#include <array>
#include <stdexcept>

#include "hcsp/math3d.hpp"

namespace hcsp::dyn {

using hcsp::UnitQuaternion;
using hcsp::Vec3;

inline constexpr double kControlDt = 0.02;  // 50 Hz control loop

struct RigidBodyState {
  Vec3 position;
  UnitQuaternion attitude;
  Vec3 linear_velocity;   // world frame
  Vec3 angular_velocity;  // body frame
};

struct QuadrotorParams {
  double mass = 1.5;                            // kg
  Vec3 inertia_diagonal{0.029, 0.029, 0.055};   // kg m^2
  std::array<Vec3, 4> rotor_positions;          // body frame, m
  std::array<Vec3, 4> rotor_axes;               // body frame, unit
  std::array<double, 4> force_to_moment_ratio;  // m
  std::array<double, 4> spin_sign;              // +1 CW, -1 CCW
  double max_rotor_thrust = 7.0;                // N
  Vec3 gravity{0.0, 0.0, -9.81};

  // Small symmetric X-frame; the defaults are representative, not a claim
  // about any specific airframe.
  static QuadrotorParams default_params();
  void validate() const;
};

struct RotorCommand {
  std::array<double, 4> normalized_thrusts{};  // each in [0, 1]

  RotorCommand clamped() const {
    RotorCommand c = *this;
    for (double& t : c.normalized_thrusts) t = std::clamp(t, 0.0, 1.0);
    return c;
  }
};

// 23 components: position(3), quaternion(4), linear velocity(3),
// angular velocity(3), heading(3), up(3), normalized rotor speeds(4).
using DroneRootState = std::array<double, 23>;

struct KinematicParams {
  double max_speed = 4.0;   // m/s
  double max_accel = 8.0;   // m/s^2
};

struct KinematicDroneState {
  Vec3 position;
  Vec3 velocity;
};

std::pair<Vec3, Vec3> thrust_torque(const QuadrotorParams& params,
                                    const RotorCommand& cmd);

// Semi-implicit Euler step; quaternion renormalized afterwards.
// Throws std::runtime_error if the state goes non-finite.
RigidBodyState step_rigid_body(const RigidBodyState& state,
                               const Vec3& force_body, const Vec3& torque_body,
                               const QuadrotorParams& params, double dt);

DroneRootState root_state_vector(const RigidBodyState& state,
                                 const RotorCommand& last_cmd);

// Root-state view of a kinematic drone: identity attitude, canonical
// heading/up, zero angular rates and rotor speeds.
DroneRootState kinematic_root_state(const KinematicDroneState& state);

KinematicDroneState kinematic_step(const KinematicDroneState& state,
                                   const Vec3& accel_cmd,
                                   const KinematicParams& params, double dt);

}  // namespace hcsp::dyn

#endif  // HCSP_DYNAMICS_HPP_
