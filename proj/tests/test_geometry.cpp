#include "sitl/geometry.hpp"

#include "sitl/rng.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace sitl;

namespace {

double quat_dist(const Rotation& a, const Rotation& b) {
  // distance up to sign
  const Rotation ca = a.canonical(), cb = b.canonical();
  return std::sqrt((ca.w - cb.w) * (ca.w - cb.w) + (ca.x - cb.x) * (ca.x - cb.x) +
                   (ca.y - cb.y) * (ca.y - cb.y) + (ca.z - cb.z) * (ca.z - cb.z));
}

// Independent oracle: renormalized linear interpolation, valid for small
// angular separation.
Rotation nlerp(const Rotation& a, const Rotation& b, double s) {
  Rotation q{a.w + s * (b.w - a.w), a.x + s * (b.x - a.x), a.y + s * (b.y - a.y),
             a.z + s * (b.z - a.z)};
  return q.normalized();
}

// Independent oracle: Rodrigues rotation formula.
Mat3 rodrigues(const Vec3& axis_angle_vec) {
  const double theta = axis_angle_vec.norm();
  if (theta < 1e-15) return Mat3::Identity();
  const Vec3 u = axis_angle_vec / theta;
  Mat3 ux;
  ux << 0, -u.z(), u.y(), u.z(), 0, -u.x(), -u.y(), u.x(), 0;
  return Mat3::Identity() + std::sin(theta) * ux +
         (1 - std::cos(theta)) * ux * ux;
}

}  // namespace

TEST_SUITE_BEGIN("geometry");

TEST_CASE("slerp endpoints and midpoint") {
  Rng rng(11);
  const Rotation q = test::random_rotation(rng);
  CHECK(quat_dist(slerp(q, q, 0.5), q) < 1e-12);

  const Rotation id = Rotation::identity();
  const Rotation z90 = Rotation::from_axis_angle(Vec3(0, 0, kPi / 2));
  const Rotation z45 = Rotation::from_axis_angle(Vec3(0, 0, kPi / 4));
  CHECK(quat_dist(slerp(id, z90, 0.5), z45) < 1e-12);

  for (int i = 0; i < 50; ++i) {
    const Rotation a = test::random_rotation(rng);
    const Rotation b = test::random_rotation(rng);
    CHECK(quat_dist(slerp(a, b, 0.0), a) < 1e-12);
    CHECK(quat_dist(slerp(a, b, 1.0), b) < 1e-12);
  }
}

TEST_CASE("slerp matches renormalized lerp for nearly identical rotations") {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const Rotation a = test::random_rotation(rng);
    const Rotation b =
        a * Rotation::from_axis_angle(Vec3(rng.normal(0, 1e-3), rng.normal(0, 1e-3),
                                           rng.normal(0, 1e-3)));
    const double s = rng.uniform();
    CHECK(quat_dist(slerp(a, b, s), nlerp(a, b, s)) < 1e-6);
  }
}

TEST_CASE("axis_angle canonical cases") {
  CHECK(axis_angle(Rotation::identity()).norm() == doctest::Approx(0.0));
  const Vec3 aa = axis_angle(Rotation::from_axis_angle(Vec3(kPi / 6, 0, 0)));
  CHECK(aa.x() == doctest::Approx(kPi / 6).epsilon(1e-12));
  CHECK(aa.y() == doctest::Approx(0.0));
  CHECK(aa.z() == doctest::Approx(0.0));
}

TEST_CASE("axis_angle round trip over random rotations") {
  Rng rng(13);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Rotation r = test::random_rotation(rng);
    const Vec3 aa = axis_angle(r);
    CHECK(aa.norm() <= kPi + 1e-12);
    worst = std::max(worst, quat_dist(Rotation::from_axis_angle(aa), r));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("axis_angle near pi uses the stable branch") {
  Rng rng(14);
  for (int i = 0; i < 200; ++i) {
    Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    const double theta = kPi - rng.uniform(0.0, 1e-7);
    const Rotation r = Rotation::from_axis_angle(axis * theta);
    // go through the matrix to exercise the extraction branches
    const Rotation r2 = Rotation::from_matrix(r.matrix());
    const Vec3 aa = axis_angle(r2);
    CHECK(aa.norm() <= kPi + 1e-9);
    CHECK(quat_dist(Rotation::from_axis_angle(aa), r) < 1e-7);
  }
}

TEST_CASE("rotation matrix is orthonormal with unit determinant") {
  Rng rng(15);
  for (int i = 0; i < 100; ++i) {
    const Mat3 m = test::random_rotation(rng).matrix();
    CHECK((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("pose composition with inverse yields identity") {
  Rng rng(16);
  for (int i = 0; i < 200; ++i) {
    Pose p{test::random_rotation(rng),
           Vec3(rng.normal(), rng.normal(), rng.normal())};
    const Pose e = p * p.inverse();
    CHECK(e.translation.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(axis_angle(e.rotation).norm() < 1e-9);

    // associativity
    Pose a{test::random_rotation(rng), Vec3(rng.normal(), rng.normal(), rng.normal())};
    Pose b{test::random_rotation(rng), Vec3(rng.normal(), rng.normal(), rng.normal())};
    const Pose lhs = (p * a) * b;
    const Pose rhs = p * (a * b);
    CHECK((lhs.translation - rhs.translation).norm() < 1e-9);
    CHECK(quat_dist(lhs.rotation, rhs.rotation) < 1e-9);
  }
}

TEST_CASE("integrate_twist basics") {
  Rng rng(17);
  const Pose p{test::random_rotation(rng), Vec3(0.2, -0.1, 0.4)};
  const Pose same = integrate_twist(p, Twist{}, 1.0);
  CHECK((same.translation - p.translation).norm() < 1e-15);
  CHECK(quat_dist(same.rotation, p.rotation) < 1e-15);

  const Pose moved =
      integrate_twist(Pose::identity(), Twist{Vec3(1, 0, 0), Vec3::Zero()}, 0.5);
  CHECK((moved.translation - Vec3(0.5, 0, 0)).norm() < 1e-15);
}

TEST_CASE("integrate_twist against the Rodrigues oracle") {
  const Twist v{Vec3::Zero(), Vec3(0, 0, kPi / 2)};
  const Pose p = integrate_twist(Pose::identity(), v, 1.0);
  CHECK((p.rotation.matrix() - rodrigues(Vec3(0, 0, kPi / 2))).cwiseAbs().maxCoeff() <
        1e-12);

  Rng rng(18);
  for (int i = 0; i < 100; ++i) {
    Vec3 w(rng.normal(), rng.normal(), rng.normal());
    const Pose q = integrate_twist(Pose::identity(), Twist{Vec3::Zero(), w}, 1.0);
    CHECK((q.rotation.matrix() - rodrigues(w)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("exp/log round trip") {
  Rng rng(19);
  for (int i = 0; i < 500; ++i) {
    Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    if (axis.norm() < 1e-12) continue;
    axis.normalize();
    Twist v{Vec3(rng.normal(), rng.normal(), rng.normal()),
            axis * rng.uniform(0.0, kPi - 1e-3)};
    const Twist back = se3_log(integrate_twist(Pose::identity(), v, 1.0));
    CHECK((back.linear - v.linear).norm() < 1e-8);
    CHECK((back.angular - v.angular).norm() < 1e-8);
  }
}

TEST_CASE("pose csv round trip with comments") {
  const auto dir = test::scratch_dir("geometry");
  const auto file = dir / "poses.csv";
  Rng rng(20);
  std::vector<TimedPose> poses;
  for (int i = 0; i < 17; ++i)
    poses.push_back({0.1 * i,
                     Pose{test::random_rotation(rng),
                          Vec3(rng.normal(), rng.normal(), rng.normal())}});
  write_pose_csv(file, poses);
  const auto back = read_pose_csv(file);
  REQUIRE(back.size() == poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    CHECK(back[i].stamp == doctest::Approx(poses[i].stamp).epsilon(1e-15));
    CHECK((back[i].pose.translation - poses[i].pose.translation).norm() < 1e-15);
    CHECK(quat_dist(back[i].pose.rotation, poses[i].pose.rotation) < 1e-15);
  }
}

TEST_SUITE_END();
