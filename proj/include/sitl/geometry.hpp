#pragma once

// Rigid-body math used across the pipeline.
//
// Conventions, stated once:
//  - units are meters and radians everywhere in the library; mm/degrees only
//    exist at CLI boundaries and in report files that say so.
//  - quaternions are Hamilton, stored (w, x, y, z), always unit.
//  - a Pose named `a_from_b` maps coordinates of frame b into frame a:
//        x_a = a_from_b.apply(x_b)
//    and composes as a_from_c = a_from_b * b_from_c.

#include <Eigen/Dense>

#include <filesystem>
#include <vector>

namespace sitl {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = 3.141592653589793238462643383279502884;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Unit quaternion, Hamilton convention, storage order (w, x, y, z).
struct Rotation {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  Rotation() = default;
  Rotation(double w_, double x_, double y_, double z_)
      : w(w_), x(x_), y(y_), z(z_) {}

  static Rotation identity() { return {}; }
  static Rotation from_matrix(const Mat3& m);
  static Rotation from_axis_angle(const Vec3& theta_u);
  /// R = Rz(yaw) * Ry(pitch) * Rx(roll).
  static Rotation from_rpy(double roll, double pitch, double yaw);

  double norm() const;
  Rotation normalized() const;
  Rotation conjugate() const { return {w, -x, -y, -z}; }
  Rotation operator*(const Rotation& q) const;
  Vec3 rotate(const Vec3& v) const;
  Mat3 matrix() const;
  double dot(const Rotation& q) const {
    return w * q.w + x * q.x + y * q.y + z * q.z;
  }
  /// Canonical representative with w >= 0 (q and -q are the same rotation).
  Rotation canonical() const { return w < 0.0 ? Rotation{-w, -x, -y, -z} : *this; }
};

/// theta*u with ||theta*u|| = rotation angle in [0, pi].
Vec3 axis_angle(const Rotation& r);

/// Geodesic interpolation on the unit quaternion sphere; shortest arc.
Rotation slerp(const Rotation& q1, const Rotation& q2, double s);

/// Geodesic angle between two rotations, in [0, pi].
double rotation_angle(const Rotation& a, const Rotation& b);

struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose identity() { return {}; }

  Pose operator*(const Pose& rhs) const {
    return {rotation * rhs.rotation,
            rotation.rotate(rhs.translation) + translation};
  }
  Pose inverse() const {
    Rotation rc = rotation.conjugate();
    return {rc, -rc.rotate(translation)};
  }
  Vec3 apply(const Vec3& v) const {
    return rotation.rotate(v) + translation;
  }
  Eigen::Matrix4d matrix() const;
};

struct Twist {
  Vec3 linear = Vec3::Zero();   // m/s
  Vec3 angular = Vec3::Zero();  // rad/s
};

/// SE(3) exponential of (linear, angular) * dt, composed on the right
/// (body frame): p * exp(v*dt).
Pose integrate_twist(const Pose& p, const Twist& v, double dt);

Pose se3_exp(const Twist& v);
/// Inverse of se3_exp for rotation angles < pi.
Twist se3_log(const Pose& p);

// --- pose record file (CSV) -------------------------------------------------
// One pose per line: stamp,x,y,z,qw,qx,qy,qz  (seconds, meters, unit quat);
// '#'-prefixed lines are comments.

struct TimedPose {
  double stamp = 0.0;
  Pose pose;
};

void write_pose_csv(const std::filesystem::path& file,
                    const std::vector<TimedPose>& poses);
std::vector<TimedPose> read_pose_csv(const std::filesystem::path& file);

}  // namespace sitl
