#include "sitl/geometry.hpp"

#include "sitl/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sitl {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace

double Rotation::norm() const {
  return std::sqrt(w * w + x * x + y * y + z * z);
}

Rotation Rotation::normalized() const {
  double n = norm();
  return {w / n, x / n, y / n, z / n};
}

Rotation Rotation::operator*(const Rotation& q) const {
  return {w * q.w - x * q.x - y * q.y - z * q.z,
          w * q.x + x * q.w + y * q.z - z * q.y,
          w * q.y - x * q.z + y * q.w + z * q.x,
          w * q.z + x * q.y - y * q.x + z * q.w};
}

Vec3 Rotation::rotate(const Vec3& v) const {
  // q v q* expanded; cheaper than building the matrix.
  const Vec3 u(x, y, z);
  const Vec3 t = 2.0 * u.cross(v);
  return v + w * t + u.cross(t);
}

Mat3 Rotation::matrix() const {
  Mat3 m;
  const double xx = x * x, yy = y * y, zz = z * z;
  const double xy = x * y, xz = x * z, yz = y * z;
  const double wx = w * x, wy = w * y, wz = w * z;
  m << 1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy),
       2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx),
       2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy);
  return m;
}

Rotation Rotation::from_matrix(const Mat3& m) {
  // Shepperd's method: branch on the largest of trace and diagonal entries,
  // which keeps the extraction stable for angles near pi.
  Rotation q;
  const double tr = m(0, 0) + m(1, 1) + m(2, 2);
  if (tr > m(0, 0) && tr > m(1, 1) && tr > m(2, 2)) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q.w = 0.25 * s;
    q.x = (m(2, 1) - m(1, 2)) / s;
    q.y = (m(0, 2) - m(2, 0)) / s;
    q.z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
    q.w = (m(2, 1) - m(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (m(0, 1) + m(1, 0)) / s;
    q.z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
    q.w = (m(0, 2) - m(2, 0)) / s;
    q.x = (m(0, 1) + m(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (m(1, 2) + m(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
    q.w = (m(1, 0) - m(0, 1)) / s;
    q.x = (m(0, 2) + m(2, 0)) / s;
    q.y = (m(1, 2) + m(2, 1)) / s;
    q.z = 0.25 * s;
  }
  return q.normalized().canonical();
}

Rotation Rotation::from_axis_angle(const Vec3& theta_u) {
  const double theta = theta_u.norm();
  if (theta < 1e-12) {
    Rotation q{1.0, 0.5 * theta_u.x(), 0.5 * theta_u.y(), 0.5 * theta_u.z()};
    return q.normalized();
  }
  const double h = 0.5 * theta;
  const double s = std::sin(h) / theta;
  return {std::cos(h), s * theta_u.x(), s * theta_u.y(), s * theta_u.z()};
}

Rotation Rotation::from_rpy(double roll, double pitch, double yaw) {
  return from_axis_angle(Vec3(0, 0, yaw)) *
         from_axis_angle(Vec3(0, pitch, 0)) *
         from_axis_angle(Vec3(roll, 0, 0));
}

Vec3 axis_angle(const Rotation& r) {
  Rotation q = r.canonical();  // w >= 0 keeps the angle in [0, pi]
  const Vec3 v(q.x, q.y, q.z);
  const double vn = v.norm();
  if (vn < 1e-12) return 2.0 * v;  // small-angle: theta*u ~ 2*(x,y,z)
  const double theta = 2.0 * std::atan2(vn, q.w);
  return (theta / vn) * v;
}

Rotation slerp(const Rotation& q1, const Rotation& q2, double s) {
  Rotation b = q2;
  double d = q1.dot(q2);
  if (d < 0.0) {  // shortest arc
    b = {-b.w, -b.x, -b.y, -b.z};
    d = -d;
  }
  if (d > 1.0 - 1e-12) {
    // near-identical endpoints: renormalized lerp
    Rotation out{q1.w + s * (b.w - q1.w), q1.x + s * (b.x - q1.x),
                 q1.y + s * (b.y - q1.y), q1.z + s * (b.z - q1.z)};
    return out.normalized();
  }
  const double theta = std::acos(std::min(1.0, d));
  const double sin_theta = std::sin(theta);
  const double wa = std::sin((1.0 - s) * theta) / sin_theta;
  const double wb = std::sin(s * theta) / sin_theta;
  Rotation out{wa * q1.w + wb * b.w, wa * q1.x + wb * b.x,
               wa * q1.y + wb * b.y, wa * q1.z + wb * b.z};
  return out.normalized();
}

double rotation_angle(const Rotation& a, const Rotation& b) {
  return axis_angle(a.conjugate() * b).norm();
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 3>(0, 0) = rotation.matrix();
  m.block<3, 1>(0, 3) = translation;
  return m;
}

Pose se3_exp(const Twist& v) {
  const Vec3& omega = v.angular;
  const double theta = omega.norm();
  const Mat3 o = skew(omega);
  Mat3 V;
  if (theta < 1e-8) {
    V = Mat3::Identity() + 0.5 * o + (1.0 / 6.0) * o * o;
  } else {
    const double t2 = theta * theta;
    V = Mat3::Identity() + ((1.0 - std::cos(theta)) / t2) * o +
        ((theta - std::sin(theta)) / (t2 * theta)) * o * o;
  }
  return {Rotation::from_axis_angle(omega), V * v.linear};
}

Twist se3_log(const Pose& p) {
  Twist v;
  v.angular = axis_angle(p.rotation);
  const double theta = v.angular.norm();
  const Mat3 o = skew(v.angular);
  Mat3 Vinv;
  if (theta < 1e-8) {
    Vinv = Mat3::Identity() - 0.5 * o + (1.0 / 12.0) * o * o;
  } else {
    // half-angle form stays finite on (0, pi]
    const double h = 0.5 * theta;
    const double cot_h = std::cos(h) / std::sin(h);
    Vinv = Mat3::Identity() - 0.5 * o +
           ((1.0 - h * cot_h) / (theta * theta)) * o * o;
  }
  v.linear = Vinv * p.translation;
  return v;
}

Pose integrate_twist(const Pose& p, const Twist& v, double dt) {
  Twist scaled{v.linear * dt, v.angular * dt};
  return p * se3_exp(scaled);
}

void write_pose_csv(const std::filesystem::path& file,
                    const std::vector<TimedPose>& poses) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << "# stamp,x,y,z,qw,qx,qy,qz\n";
  char buf[256];
  for (const auto& tp : poses) {
    const Rotation& q = tp.pose.rotation;
    const Vec3& t = tp.pose.translation;
    std::snprintf(buf, sizeof(buf),
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  tp.stamp, t.x(), t.y(), t.z(), q.w, q.x, q.y, q.z);
    out << buf;
  }
}

std::vector<TimedPose> read_pose_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<TimedPose> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double f[8];
    char comma;
    for (int i = 0; i < 8; ++i) {
      if (!(ss >> f[i])) throw IoError("bad pose record: " + line);
      if (i < 7 && !(ss >> comma)) throw IoError("bad pose record: " + line);
    }
    TimedPose tp;
    tp.stamp = f[0];
    tp.pose.translation = Vec3(f[1], f[2], f[3]);
    tp.pose.rotation = Rotation{f[4], f[5], f[6], f[7]}.normalized();
    poses.push_back(tp);
  }
  return poses;
}

}  // namespace sitl
