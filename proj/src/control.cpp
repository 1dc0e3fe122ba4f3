#include "hcsp/control.hpp"

#include <algorithm>
#include <cmath>

namespace hcsp::control {

namespace {

// Solve a small linear system in place (Gaussian elimination with partial
// pivoting); a is n x n row-major, b the rhs/solution.
bool solve_linear(std::vector<double>& a, std::vector<double>& b, int n) {
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    if (std::abs(a[pivot * n + col]) < 1e-12) return false;
    if (pivot != col) {
      for (int c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      std::swap(b[col], b[pivot]);
    }
    double inv = 1.0 / a[col * n + col];
    for (int r = col + 1; r < n; ++r) {
      double f = a[r * n + col] * inv;
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= a[r * n + c] * b[c];
    b[r] = acc / a[r * n + r];
  }
  return true;
}

}  // namespace

DroneCommand kinematic_goto(const GameState& state, int drone,
                            const Vec3& target, const game::EnvOptions& env,
                            double kp, double kd) {
  Vec3 p = state.drones[drone].kin.position;
  Vec3 v = state.drones[drone].kin.velocity;
  Vec3 a = kp * (target - p) - kd * v;
  double scale = 1.0 / (2.0 * env.kinematic.max_accel);
  DroneCommand cmd;
  cmd.values[0] = std::clamp(0.5 + a.x * scale, 0.0, 1.0);
  cmd.values[1] = std::clamp(0.5 + a.y * scale, 0.0, 1.0);
  cmd.values[2] = std::clamp(0.5 + a.z * scale, 0.0, 1.0);
  cmd.values[3] = 0.5;
  return cmd;
}

DroneCommand quad_position_hold(const GameState& state, int drone,
                                const Vec3& target,
                                const game::EnvOptions& env) {
  const auto& body = state.drones[drone].body;
  const auto& qp = env.quadrotor;

  const double kp = 6.0, kd = 4.0;
  Vec3 a_des = kp * (target - body.position) - kd * body.linear_velocity;
  double a_max = 0.6 * qp.max_rotor_thrust * 4.0 / qp.mass;
  double an = a_des.norm();
  if (an > a_max) a_des = a_des * (a_max / an);

  Vec3 thrust_vec = qp.mass * (a_des - qp.gravity);  // world frame
  double f_total = thrust_vec.norm();
  Vec3 z_des = f_total > 1e-9 ? thrust_vec / f_total : Vec3{0, 0, 1};

  // Attitude P on the tilt error, with rate damping and yaw-rate damping.
  Vec3 z_cur = body.attitude.up();
  Vec3 e_world = z_cur.cross(z_des);
  Vec3 e_body = body.attitude.conjugate().rotate(e_world);
  const double kr = 18.0, kw = 3.0;
  const Vec3& J = qp.inertia_diagonal;
  Vec3 tau{J.x * (kr * e_body.x - kw * body.angular_velocity.x),
           J.y * (kr * e_body.y - kw * body.angular_velocity.y),
           J.z * (-kw * body.angular_velocity.z)};

  // Thrust along current body z that realizes the desired vertical force.
  double cos_tilt = std::max(z_cur.dot(z_des), 0.3);
  double f_body = f_total / cos_tilt;

  // Mixer: solve [sum f; tau_x; tau_y; tau_z] for per-rotor thrusts.
  std::vector<double> A(16), b{f_body, tau.x, tau.y, tau.z};
  for (int i = 0; i < 4; ++i) {
    A[0 * 4 + i] = 1.0;
    A[1 * 4 + i] = qp.rotor_positions[i].y;   // (T x f z)_x = f * T_y
    A[2 * 4 + i] = -qp.rotor_positions[i].x;  // (T x f z)_y = -f * T_x
    A[3 * 4 + i] = qp.spin_sign[i] * qp.force_to_moment_ratio[i];
  }
  DroneCommand cmd;
  if (solve_linear(A, b, 4)) {
    for (int i = 0; i < 4; ++i)
      cmd.values[i] = std::clamp(b[i] / qp.max_rotor_thrust, 0.0, 1.0);
  } else {
    double hover = -qp.gravity.z * qp.mass / (4.0 * qp.max_rotor_thrust);
    cmd.values = {hover, hover, hover, hover};
  }
  return cmd;
}

Vec3 predict_ball_at_height(const game::BallState& ball, double height) {
  const double g = 9.81;
  double dz = ball.position.z - height;
  double disc = ball.velocity.z * ball.velocity.z + 2.0 * g * dz;
  if (disc < 0.0) return ball.position;
  double t = (ball.velocity.z + std::sqrt(disc)) / g;
  return {ball.position.x + ball.velocity.x * t,
          ball.position.y + ball.velocity.y * t, height};
}

}  // namespace hcsp::control
