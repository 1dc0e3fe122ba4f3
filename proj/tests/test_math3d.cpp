#include <cmath>

#include "doctest.h"
#include "hcsp/math3d.hpp"

using namespace hcsp;

TEST_CASE("quaternion rotation matches axis-angle on basis vectors") {
  UnitQuaternion yaw90 = UnitQuaternion::from_axis_angle({0, 0, 1}, M_PI / 2);
  Vec3 r = yaw90.rotate({1, 0, 0});
  CHECK(r.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.y == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.z == doctest::Approx(0.0).epsilon(1e-12));

  UnitQuaternion pitch90 = UnitQuaternion::from_axis_angle({0, 1, 0}, M_PI / 2);
  Vec3 u = pitch90.rotate({0, 0, 1});
  CHECK(u.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(u.z == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("heading and up are rotation-matrix columns") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    UnitQuaternion q =
        UnitQuaternion::from_axis_angle(axis, rng.uniform(-M_PI, M_PI));
    Vec3 h = q.rotate({1, 0, 0});
    Vec3 u = q.rotate({0, 0, 1});
    CHECK((h - q.heading()).norm() < 1e-12);
    CHECK((u - q.up()).norm() < 1e-12);
  }
}

TEST_CASE("quaternion product composes rotations") {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    UnitQuaternion a = UnitQuaternion::from_axis_angle(
        {rng.normal(), rng.normal(), rng.normal()}, rng.uniform(-3, 3));
    UnitQuaternion b = UnitQuaternion::from_axis_angle(
        {rng.normal(), rng.normal(), rng.normal()}, rng.uniform(-3, 3));
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    Vec3 lhs = (a * b).rotate(v);
    Vec3 rhs = a.rotate(b.rotate(v));
    CHECK((lhs - rhs).norm() < 1e-12);
  }
}

TEST_CASE("conjugate inverts a unit quaternion") {
  UnitQuaternion q = UnitQuaternion::from_axis_angle({1, 2, 3}, 0.7);
  Vec3 v{0.3, -1.2, 2.0};
  Vec3 back = q.conjugate().rotate(q.rotate(v));
  CHECK((back - v).norm() < 1e-12);
}

TEST_CASE("euler angles round-trip single-axis rotations") {
  double roll, pitch, yaw;
  UnitQuaternion::from_axis_angle({0, 0, 1}, 0.4).to_euler(roll, pitch, yaw);
  CHECK(yaw == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(roll == doctest::Approx(0.0));
  UnitQuaternion::from_axis_angle({1, 0, 0}, -0.3).to_euler(roll, pitch, yaw);
  CHECK(roll == doctest::Approx(-0.3).epsilon(1e-12));
}

TEST_CASE("rng uniform stays in range and is deterministic") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == b.uniform());
  }
}

TEST_CASE("rng below produces only values under the bound") {
  Rng rng(7);
  std::array<int, 5> counts{};
  for (int i = 0; i < 5000; ++i) {
    std::uint64_t v = rng.below(5);
    REQUIRE(v < 5);
    counts[v]++;
  }
  for (int c : counts) CHECK(c > 800);  // roughly uniform
}

TEST_CASE("rng normal has sane first moments") {
  Rng rng(123);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sum_sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sum_sq / n == doctest::Approx(1.0).epsilon(0.02));
}
