#include "sitl/simcam.hpp"

#include "sitl/error.hpp"
#include "sitl/parallel.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/LU>

#include <cmath>
#include <fstream>

namespace sitl {

using json = nlohmann::ordered_json;

Intrinsics Intrinsics::default_camera() {
  Intrinsics k;
  k.width = 640;
  k.height = 360;
  k.fx = k.fy = (k.width / 2.0) / std::tan(deg2rad(83.0 / 2.0));
  k.skew = 0.0;
  k.cx = k.width / 2.0;
  k.cy = k.height / 2.0;
  return k;
}

Vec2 project(const Intrinsics& k, const Vec3& x_cam) {
  if (x_cam.z() <= 1e-9) throw BehindCamera("z <= 1e-9 in project");
  const double u = (k.fx * x_cam.x() + k.skew * x_cam.y()) / x_cam.z() + k.cx;
  const double v = k.fy * x_cam.y() / x_cam.z() + k.cy;
  return {u, v};
}

PlaneInCamera plane_in_camera(const PlaneSpec& plane,
                              const Pose& camera_from_world) {
  // plane in world: n_w^T x = n_w^T p0 with p0 the pattern origin
  const Vec3 n_w = plane.world_normal();
  const Vec3 p0 = plane.world_from_pattern.translation;
  // to camera frame: x_w = world_from_camera * x_c
  const Pose world_from_camera = camera_from_world.inverse();
  const Vec3 n_c = world_from_camera.rotation.conjugate().rotate(n_w);
  const double d = n_w.dot(world_from_camera.translation - p0);
  if (std::abs(d) < 1e-9)
    throw DegeneratePlane("camera center lies on the workspace plane");
  // orient so plane points satisfy n^T x = -d with d > 0
  PlaneInCamera out;
  out.normal = d > 0 ? n_c : Vec3(-n_c);
  out.distance = std::abs(d);
  return out;
}

Homography plane_homography(const Intrinsics& k, const Pose& src_from_dst,
                            const PlaneInCamera& plane,
                            const std::string& src_tag,
                            const std::string& dst_tag) {
  if (plane.distance <= 0.0) throw DegeneratePlane("plane distance must be > 0");
  const Mat3 K = k.matrix();
  const Mat3 R = src_from_dst.rotation.matrix();
  const Vec3& t = src_from_dst.translation;
  const Mat3 euclid =
      R.transpose() *
      (Mat3::Identity() + t * plane.normal.transpose() / plane.distance);
  Homography out;
  out.h = normalize_homography(K * euclid * K.inverse());
  out.src_frame = src_tag;
  out.dst_frame = dst_tag;
  return out;
}

namespace {

struct RenderSetup {
  Pose world_from_camera;
  Vec3 origin_pattern;   // camera center in pattern frame
  Mat3 ray_pattern;      // pixel (u,v,1) -> ray direction in pattern frame
  double sx = 0, sy = 0; // meters -> pattern pixels
  double half_x = 0, half_y = 0;
  int pw = 0, ph = 0;
};

RenderSetup make_setup(const Pose& camera_from_world, const Intrinsics& k,
                       const PlaneSpec& plane) {
  RenderSetup s;
  s.world_from_camera = camera_from_world.inverse();
  const Pose pattern_from_camera =
      plane.world_from_pattern.inverse() * s.world_from_camera;
  s.origin_pattern = pattern_from_camera.translation;
  s.ray_pattern = pattern_from_camera.rotation.matrix() * k.matrix().inverse();
  s.pw = plane.pattern.width;
  s.ph = plane.pattern.height;
  s.half_x = plane.extent_x / 2.0;
  s.half_y = plane.extent_y / 2.0;
  s.sx = (s.pw - 1) / plane.extent_x;
  s.sy = (s.ph - 1) / plane.extent_y;
  if (plane.extent_x <= 0 || plane.extent_y <= 0)
    throw InvalidSpec("pattern extent must be > 0");
  if (s.origin_pattern.z() <= 0)
    throw DegeneratePose("camera is not above the pattern side of the plane");
  return s;
}

// Pattern-plane hit for one pixel; false = ray misses the pattern.
// Pattern rows run along -y of the pattern frame so that a camera looking
// down at the plane sees the pattern unmirrored (descriptors are not
// flip-invariant, so orientation preservation matters downstream).
inline bool hit_pattern(const RenderSetup& s, double u, double v, double& px,
                        double& py) {
  const Vec3 dir = s.ray_pattern * Vec3(u, v, 1.0);
  if (dir.z() >= -1e-12) return false;  // parallel or away from the plane
  const double t = -s.origin_pattern.z() / dir.z();
  const double wx = s.origin_pattern.x() + t * dir.x();
  const double wy = s.origin_pattern.y() + t * dir.y();
  if (wx < -s.half_x || wx > s.half_x || wy < -s.half_y || wy > s.half_y)
    return false;
  px = (wx + s.half_x) * s.sx;
  py = (s.half_y - wy) * s.sy;
  return px >= 0 && py >= 0 && px <= s.pw - 1 && py <= s.ph - 1;
}

template <typename Loop>
ImageBuffer render_impl(const Pose& camera_from_world, const Intrinsics& k,
                        const PlaneSpec& plane, const Loop& loop) {
  const RenderSetup s = make_setup(camera_from_world, k, plane);
  ImageBuffer out(k.width, k.height);
  std::vector<std::uint8_t> any_hit(k.height, 0);
  loop(k.height, [&](std::int64_t y) {
    double px, py;
    for (int x = 0; x < k.width; ++x) {
      if (!hit_pattern(s, x, static_cast<double>(y), px, py)) continue;
      any_hit[y] = 1;
      const Vec3 c = plane.pattern.sample(px, py);
      for (int ch = 0; ch < 3; ++ch)
        out.at(x, static_cast<int>(y), ch) =
            static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::round(c[ch]))));
    }
  });
  bool any = false;
  for (auto h : any_hit) any |= h != 0;
  if (!any) throw DegeneratePose("no pixel intersects the workspace pattern");
  return out;
}

}  // namespace

ImageBuffer render_view(const Pose& camera_from_world, const Intrinsics& k,
                        const PlaneSpec& plane) {
  return render_impl(camera_from_world, k, plane,
                     [](std::int64_t n, auto&& fn) { parallel_for(n, fn); });
}

ImageBuffer render_view_serial(const Pose& camera_from_world,
                               const Intrinsics& k, const PlaneSpec& plane) {
  return render_impl(camera_from_world, k, plane,
                     [](std::int64_t n, auto&& fn) { serial_for(n, fn); });
}

std::vector<std::uint8_t> render_coverage(const Pose& camera_from_world,
                                          const Intrinsics& k,
                                          const PlaneSpec& plane) {
  const RenderSetup s = make_setup(camera_from_world, k, plane);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(k.width) * k.height, 0);
  parallel_for(k.height, [&](std::int64_t y) {
    double px, py;
    for (int x = 0; x < k.width; ++x)
      if (hit_pattern(s, x, static_cast<double>(y), px, py))
        mask[static_cast<std::size_t>(y) * k.width + x] = 1;
  });
  return mask;
}

const RigCamera& CameraRig::camera(const std::string& name) const {
  for (const auto& c : cameras)
    if (c.name == name) return c;
  throw InvalidSpec("no camera named '" + name + "' in rig");
}

CameraRig CameraRig::default_rig(ImageBuffer pattern) {
  CameraRig rig;
  rig.plane.pattern = std::move(pattern);
  rig.plane.extent_x = rig.plane.extent_y = 0.8;

  // Cameras sit 0.05 m up the probe axis from the tip, 0.03 m to each side,
  // tilted (roll, pitch, yaw) = (30, 10, 0) and (-30, 10, 180) degrees
  // relative to the probe frame. Probe +z points at the workspace.
  RigCamera left;
  left.name = "left";
  left.intrinsics = Intrinsics::default_camera();
  left.probe_from_camera =
      Pose(Rotation::from_rpy(deg2rad(30), deg2rad(10), 0.0),
           Vec3(-0.03, 0.0, -0.05));
  RigCamera right;
  right.name = "right";
  right.intrinsics = Intrinsics::default_camera();
  right.probe_from_camera =
      Pose(Rotation::from_rpy(deg2rad(-30), deg2rad(10), deg2rad(180)),
           Vec3(0.03, 0.0, -0.05));
  rig.cameras = {left, right};
  return rig;
}

namespace {

json pose_to_json(const Pose& p) {
  return json{{"xyz_m", {p.translation.x(), p.translation.y(), p.translation.z()}},
              {"quat_wxyz",
               {p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z}}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  const auto& t = j.at("xyz_m");
  p.translation = Vec3(t.at(0), t.at(1), t.at(2));
  const auto& q = j.at("quat_wxyz");
  p.rotation = Rotation{q.at(0), q.at(1), q.at(2), q.at(3)}.normalized();
  return p;
}

}  // namespace

CameraRig load_rig(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open rig file " + file.string());
  json j;
  in >> j;

  CameraRig rig;
  std::filesystem::path pattern_path = j.at("pattern").get<std::string>();
  if (pattern_path.is_relative()) pattern_path = file.parent_path() / pattern_path;
  rig.plane.pattern = read_png(pattern_path);
  rig.plane.extent_x = j.at("pattern_extent_m").at(0);
  rig.plane.extent_y = j.at("pattern_extent_m").at(1);
  if (j.contains("world_from_pattern"))
    rig.plane.world_from_pattern = pose_from_json(j.at("world_from_pattern"));

  for (const auto& jc : j.at("cameras")) {
    RigCamera cam;
    cam.name = jc.at("name").get<std::string>();
    const auto& ji = jc.at("intrinsics");
    cam.intrinsics.fx = ji.at("fx");
    cam.intrinsics.fy = ji.at("fy");
    cam.intrinsics.skew = ji.value("skew", 0.0);
    cam.intrinsics.cx = ji.at("cx");
    cam.intrinsics.cy = ji.at("cy");
    cam.intrinsics.width = ji.at("width");
    cam.intrinsics.height = ji.at("height");
    const auto& rpy = jc.at("camera_rpy_deg");
    const auto& xyz = jc.at("camera_xyz_m");
    cam.probe_from_camera =
        Pose(Rotation::from_rpy(deg2rad(rpy.at(0)), deg2rad(rpy.at(1)),
                                deg2rad(rpy.at(2))),
             Vec3(xyz.at(0), xyz.at(1), xyz.at(2)));
    rig.cameras.push_back(std::move(cam));
  }
  if (rig.cameras.empty() || rig.cameras.size() > 2)
    throw InvalidSpec("rig must declare 1 or 2 cameras");
  return rig;
}

void save_rig(const std::filesystem::path& file, const CameraRig& rig,
              const std::string& pattern_path) {
  json j;
  j["pattern"] = pattern_path;
  j["pattern_extent_m"] = {rig.plane.extent_x, rig.plane.extent_y};
  j["world_from_pattern"] = pose_to_json(rig.plane.world_from_pattern);
  j["cameras"] = json::array();
  for (const auto& cam : rig.cameras) {
    // decompose the stored rotation back to rpy for the human-facing file
    const Mat3 r = cam.probe_from_camera.rotation.matrix();
    const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
    const double roll = std::atan2(r(2, 1), r(2, 2));
    const double yaw = std::atan2(r(1, 0), r(0, 0));
    j["cameras"].push_back(
        {{"name", cam.name},
         {"intrinsics",
          {{"fx", cam.intrinsics.fx},
           {"fy", cam.intrinsics.fy},
           {"skew", cam.intrinsics.skew},
           {"cx", cam.intrinsics.cx},
           {"cy", cam.intrinsics.cy},
           {"width", cam.intrinsics.width},
           {"height", cam.intrinsics.height}}},
         {"camera_rpy_deg", {rad2deg(roll), rad2deg(pitch), rad2deg(yaw)}},
         {"camera_xyz_m",
          {cam.probe_from_camera.translation.x(),
           cam.probe_from_camera.translation.y(),
           cam.probe_from_camera.translation.z()}}});
  }
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << j.dump(2) << "\n";
}

}  // namespace sitl
