#pragma once

#include "sitl/geometry.hpp"
#include "sitl/image.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sitl {

struct Intrinsics {
  double fx = 0.0, fy = 0.0;  // pixels
  double skew = 0.0;
  double cx = 0.0, cy = 0.0;  // pixels
  int width = 0, height = 0;

  Mat3 matrix() const {
    Mat3 k;
    k << fx, skew, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  /// 640x360 raster, 83 deg horizontal FoV, square pixels, centered
  /// principal point.
  static Intrinsics default_camera();
};

/// p = K x / z in pixel coords; throws BehindCamera for z <= 1e-9.
Vec2 project(const Intrinsics& k, const Vec3& x_cam);

/// Textured workspace plane. The pattern lies in the plane z = 0 of its own
/// frame, centered at the origin, x/y axes aligned with pattern columns/rows;
/// `world_from_pattern` places it in the world (identity = the z=0 world
/// plane of the defaults).
struct PlaneSpec {
  ImageBuffer pattern;
  double extent_x = 0.8;  // meters
  double extent_y = 0.8;
  Pose world_from_pattern;  // pattern frame -> world frame

  /// World-frame unit normal on the camera side (+z of the pattern frame).
  Vec3 world_normal() const {
    return world_from_pattern.rotation.rotate(Vec3(0, 0, 1));
  }
};

/// The (n, d) pair of the plane expressed in a camera frame: points on the
/// plane satisfy n^T x = -d with d > 0 the camera-to-plane distance.
struct PlaneInCamera {
  Vec3 normal = Vec3(0, 0, -1);
  double distance = 0.0;
};

/// Throws DegeneratePlane when the camera center lies on the plane.
PlaneInCamera plane_in_camera(const PlaneSpec& plane,
                              const Pose& camera_from_world);

/// Plane-induced homography between two views of the same plane:
///   H = xi * K * R^T (I + t n^T / d) K^-1,  normalized H(2,2) = 1,
/// where `src_from_dst` is the pose of the destination camera expressed in
/// the source camera frame and (n, d) describe the plane in the source
/// camera frame. H maps source pixels to destination pixels.
Homography plane_homography(const Intrinsics& k, const Pose& src_from_dst,
                            const PlaneInCamera& plane,
                            const std::string& src_tag = "src",
                            const std::string& dst_tag = "dst");

/// Per-pixel ray/plane intersection sampled bilinearly from the pattern;
/// rays that miss the pattern render black. Deliberately not implemented as
/// a whole-image warp so it can act as an independent oracle for the
/// homography math.
ImageBuffer render_view(const Pose& camera_from_world, const Intrinsics& k,
                        const PlaneSpec& plane);
ImageBuffer render_view_serial(const Pose& camera_from_world,
                               const Intrinsics& k, const PlaneSpec& plane);

/// One flag per pixel: true where the renderer's ray hits the pattern.
std::vector<std::uint8_t> render_coverage(const Pose& camera_from_world,
                                          const Intrinsics& k,
                                          const PlaneSpec& plane);

// --- camera rig ------------------------------------------------------------------

struct RigCamera {
  std::string name;
  Intrinsics intrinsics;
  Pose probe_from_camera;  // where the camera sits on the holder
};

struct CameraRig {
  std::vector<RigCamera> cameras;  // 1 or 2
  PlaneSpec plane;

  const RigCamera& camera(const std::string& name) const;
  /// Camera pose in the world given the probe pose in the world.
  static Pose world_from_camera(const Pose& world_from_probe,
                                const RigCamera& cam) {
    return world_from_probe * cam.probe_from_camera;
  }

  /// Two-camera rig with the default geometry; pattern must be supplied.
  static CameraRig default_rig(ImageBuffer pattern);
};

/// Rig configuration JSON (lengths in meters, angles in degrees in the
/// file). `base_dir` resolves a relative pattern path.
CameraRig load_rig(const std::filesystem::path& file);
void save_rig(const std::filesystem::path& file, const CameraRig& rig,
              const std::string& pattern_path);

}  // namespace sitl
