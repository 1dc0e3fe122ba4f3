#ifndef HCSP_MATH3D_HPP_
#define HCSP_MATH3D_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <random>

namespace hcsp {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  double norm_sq() const { return dot(*this); }
  Vec3 normalized() const {
    double n = norm();
    return n > 0.0 ? (*this) / n : Vec3{};
  }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Scalar-first Hamilton quaternion; rotates body frame into world frame.
struct UnitQuaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  static UnitQuaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }

  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle) {
    Vec3 a = axis.normalized();
    double h = 0.5 * angle;
    double s = std::sin(h);
    return {std::cos(h), a.x * s, a.y * s, a.z * s};
  }

  UnitQuaternion operator*(const UnitQuaternion& q) const {
    return {w * q.w - x * q.x - y * q.y - z * q.z,
            w * q.x + x * q.w + y * q.z - z * q.y,
            w * q.y - x * q.z + y * q.w + z * q.x,
            w * q.z + x * q.y - y * q.x + z * q.w};
  }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  UnitQuaternion normalized() const {
    double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  UnitQuaternion conjugate() const { return {w, -x, -y, -z}; }

  // Rotate a body-frame vector into the world frame.
  Vec3 rotate(const Vec3& v) const {
    Vec3 q{x, y, z};
    Vec3 t = 2.0 * q.cross(v);
    return v + w * t + q.cross(t);
  }

  // First column of the rotation matrix (body x-axis in world frame).
  Vec3 heading() const {
    return {1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y + w * z),
            2.0 * (x * z - w * y)};
  }
  // Third column (body z-axis in world frame).
  Vec3 up() const {
    return {2.0 * (x * z + w * y), 2.0 * (y * z - w * x),
            1.0 - 2.0 * (x * x + y * y)};
  }

  // ZYX Euler angles (roll about x, pitch about y, yaw about z).
  void to_euler(double& roll, double& pitch, double& yaw) const {
    roll = std::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
    double s = 2.0 * (w * y - z * x);
    s = std::clamp(s, -1.0, 1.0);
    pitch = std::asin(s);
    yaw = std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
  }
};

// Deterministic RNG: mt19937_64 core with explicit transforms so sampled
// values are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {  // Box-Muller, cached pair
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = gen_();
      if (r >= threshold) return r % n;
    }
  }

  std::uint64_t raw() { return gen_(); }

  Rng split() { return Rng(gen_()); }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hcsp

#endif  // HCSP_MATH3D_HPP_
