#include "hcsp/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace hcsp::dyn {

QuadrotorParams QuadrotorParams::default_params() {
  QuadrotorParams p;
  const double arm = 0.17;
  const double d = arm / std::sqrt(2.0);
  p.rotor_positions = {Vec3{d, -d, 0.0}, Vec3{-d, d, 0.0}, Vec3{d, d, 0.0},
                       Vec3{-d, -d, 0.0}};
  p.rotor_axes = {Vec3{0, 0, 1}, Vec3{0, 0, 1}, Vec3{0, 0, 1}, Vec3{0, 0, 1}};
  p.force_to_moment_ratio = {0.016, 0.016, 0.016, 0.016};
  p.spin_sign = {1.0, 1.0, -1.0, -1.0};
  return p;
}

void QuadrotorParams::validate() const {
  if (mass <= 0.0) throw std::invalid_argument("mass must be positive");
  if (inertia_diagonal.x <= 0.0 || inertia_diagonal.y <= 0.0 ||
      inertia_diagonal.z <= 0.0)
    throw std::invalid_argument("inertia components must be positive");
  for (const Vec3& a : rotor_axes)
    if (std::abs(a.norm() - 1.0) > 1e-9)
      throw std::invalid_argument("rotor axes must be unit-norm");
}

std::pair<Vec3, Vec3> thrust_torque(const QuadrotorParams& params,
                                    const RotorCommand& cmd) {
  RotorCommand c = cmd.clamped();
  Vec3 force{}, torque{};
  for (int i = 0; i < 4; ++i) {
    double fi = c.normalized_thrusts[i] * params.max_rotor_thrust;
    Vec3 f_vec = params.rotor_axes[i] * fi;
    force += f_vec;
    torque += params.rotor_positions[i].cross(f_vec) +
              params.spin_sign[i] * params.force_to_moment_ratio[i] * f_vec;
  }
  return {force, torque};
}

RigidBodyState step_rigid_body(const RigidBodyState& state,
                               const Vec3& force_body, const Vec3& torque_body,
                               const QuadrotorParams& params, double dt) {
  const Vec3& J = params.inertia_diagonal;
  const Vec3& w = state.angular_velocity;
  Vec3 Jw{J.x * w.x, J.y * w.y, J.z * w.z};
  Vec3 gyro = torque_body - w.cross(Jw);
  Vec3 w_dot{gyro.x / J.x, gyro.y / J.y, gyro.z / J.z};

  Vec3 accel = state.attitude.rotate(force_body) / params.mass + params.gravity;

  RigidBodyState next;
  next.linear_velocity = state.linear_velocity + accel * dt;
  next.position = state.position + next.linear_velocity * dt;
  next.angular_velocity = w + w_dot * dt;

  const Vec3& wn = next.angular_velocity;
  UnitQuaternion omega_q{0.0, wn.x, wn.y, wn.z};
  UnitQuaternion q_dot = state.attitude * omega_q;
  UnitQuaternion q{state.attitude.w + 0.5 * q_dot.w * dt,
                   state.attitude.x + 0.5 * q_dot.x * dt,
                   state.attitude.y + 0.5 * q_dot.y * dt,
                   state.attitude.z + 0.5 * q_dot.z * dt};
  next.attitude = q.normalized();

  if (!next.position.finite() || !next.linear_velocity.finite() ||
      !next.angular_velocity.finite() || !std::isfinite(next.attitude.w))
    throw std::runtime_error("rigid body integration fault: non-finite state");
  return next;
}

DroneRootState root_state_vector(const RigidBodyState& state,
                                 const RotorCommand& last_cmd) {
  DroneRootState v{};
  v[0] = state.position.x;
  v[1] = state.position.y;
  v[2] = state.position.z;
  v[3] = state.attitude.w;
  v[4] = state.attitude.x;
  v[5] = state.attitude.y;
  v[6] = state.attitude.z;
  v[7] = state.linear_velocity.x;
  v[8] = state.linear_velocity.y;
  v[9] = state.linear_velocity.z;
  v[10] = state.angular_velocity.x;
  v[11] = state.angular_velocity.y;
  v[12] = state.angular_velocity.z;
  Vec3 h = state.attitude.heading();
  Vec3 u = state.attitude.up();
  v[13] = h.x;
  v[14] = h.y;
  v[15] = h.z;
  v[16] = u.x;
  v[17] = u.y;
  v[18] = u.z;
  RotorCommand c = last_cmd.clamped();
  for (int i = 0; i < 4; ++i) v[19 + i] = c.normalized_thrusts[i];
  return v;
}

DroneRootState kinematic_root_state(const KinematicDroneState& state) {
  RigidBodyState rb;
  rb.position = state.position;
  rb.attitude = UnitQuaternion::identity();
  rb.linear_velocity = state.velocity;
  rb.angular_velocity = Vec3{};
  return root_state_vector(rb, RotorCommand{});
}

KinematicDroneState kinematic_step(const KinematicDroneState& state,
                                   const Vec3& accel_cmd,
                                   const KinematicParams& params, double dt) {
  Vec3 a = accel_cmd;
  double an = a.norm();
  if (an > params.max_accel) a = a * (params.max_accel / an);

  KinematicDroneState next;
  next.velocity = state.velocity + a * dt;
  double sp = next.velocity.norm();
  if (sp > params.max_speed) next.velocity = next.velocity * (params.max_speed / sp);
  next.position = state.position + next.velocity * dt;
  return next;
}

}  // namespace hcsp::dyn
