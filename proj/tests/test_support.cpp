#include "test_support.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdlib>

namespace sitl::test {

const ImageBuffer& pattern() {
  static const ImageBuffer p = generate_pattern();
  return p;
}

const ImageBuffer& small_pattern() {
  static const ImageBuffer p = generate_pattern(512, 512, 77);
  return p;
}

const PlaneSpec& plane() {
  static const PlaneSpec p = [] {
    PlaneSpec spec;
    spec.pattern = pattern();
    spec.extent_x = spec.extent_y = 0.8;
    return spec;
  }();
  return p;
}

Pose random_camera_pose(Rng& rng, double h_lo, double h_hi, double lateral,
                        double tilt_rad) {
  const double x = rng.uniform(-lateral, lateral);
  const double y = rng.uniform(-lateral, lateral);
  const double z = rng.uniform(h_lo, h_hi);
  const double tilt = rng.uniform(0.0, tilt_rad);
  const double tilt_dir = rng.uniform(0.0, 2.0 * kPi);
  const double yaw = rng.uniform(0.0, 2.0 * kPi);

  // down-looking base: camera x -> world x, camera y -> world -y,
  // camera z -> world -z
  Mat3 base;
  base << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  Rotation r = Rotation::from_matrix(base) *
               Rotation::from_axis_angle(Vec3(0, 0, yaw)) *
               Rotation::from_axis_angle(
                   Vec3(tilt * std::cos(tilt_dir), tilt * std::sin(tilt_dir), 0));
  return {r, Vec3(x, y, z)};
}

Pose random_offset(Rng& rng, double trans, double rot) {
  Vec3 dir(rng.normal(), rng.normal(), rng.normal());
  if (dir.norm() < 1e-12) dir = Vec3(1, 0, 0);
  dir.normalize();
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  if (axis.norm() < 1e-12) axis = Vec3(0, 0, 1);
  axis.normalize();
  return {Rotation::from_axis_angle(axis * rng.uniform(0.0, rot)),
          dir * rng.uniform(0.0, trans)};
}

Rotation random_rotation(Rng& rng) {
  // uniform via normalized 4D Gaussian
  Rotation q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
  if (q.norm() < 1e-9) return Rotation::identity();
  return q.normalized();
}

std::filesystem::path scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("sitl_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sitl::test
