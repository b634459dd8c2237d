#include "sitl/simcam.hpp"

#include "sitl/error.hpp"
#include "sitl/rng.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace sitl;

namespace {

// Project a world point through a camera; independent of plane_homography.
Vec2 project_world(const Pose& camera_from_world, const Intrinsics& k,
                   const Vec3& x_world) {
  return project(k, camera_from_world.apply(x_world));
}

}  // namespace

TEST_SUITE_BEGIN("simcam");

TEST_CASE("project canonical cases") {
  Intrinsics k = Intrinsics::default_camera();
  CHECK(k.fx == doctest::Approx(361.7).epsilon(1e-3));

  const Vec2 center = project(k, Vec3(0, 0, 1));
  CHECK(center.x() == doctest::Approx(320.0));
  CHECK(center.y() == doctest::Approx(180.0));

  const Vec2 off = project(k, Vec3(0.1, 0, 1));
  CHECK(off.x() == doctest::Approx(320.0 + 0.1 * k.fx).epsilon(1e-12));
  CHECK(off.y() == doctest::Approx(180.0));

  CHECK_THROWS_AS(project(k, Vec3(0, 0, 0)), BehindCamera);
  CHECK_THROWS_AS(project(k, Vec3(0.3, 0.1, -0.5)), BehindCamera);
}

TEST_CASE("plane homography of the identity relative pose is identity") {
  Intrinsics k = Intrinsics::default_camera();
  PlaneInCamera plane{Vec3(0, 0, -1), 0.1};
  const Homography h = plane_homography(k, Pose::identity(), plane);
  CHECK((h.h - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("plane homography symbolic diagonal case") {
  // K = I, R = I, n = (0,0,-1): a displacement delta along -z (away from the
  // plane) gives H = diag(1,1,1+delta/d), i.e. diag(1/(1+delta/d), ., 1)
  // after normalization.
  Intrinsics k;
  k.fx = k.fy = 1.0;
  k.cx = k.cy = 0.0;
  k.width = k.height = 2;
  const double d = 0.08, delta = 0.02;
  PlaneInCamera plane{Vec3(0, 0, -1), d};
  const Homography h =
      plane_homography(k, Pose{Rotation::identity(), Vec3(0, 0, -delta)}, plane);
  const double s = 1.0 / (1.0 + delta / d);
  CHECK(h.h(0, 0) == doctest::Approx(s).epsilon(1e-12));
  CHECK(h.h(1, 1) == doctest::Approx(s).epsilon(1e-12));
  CHECK(h.h(2, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(h.h(0, 1)) + std::abs(h.h(0, 2)) + std::abs(h.h(1, 0)) +
            std::abs(h.h(1, 2)) + std::abs(h.h(2, 0)) + std::abs(h.h(2, 1)) <
        1e-12);
}

TEST_CASE("plane homography agrees with two-camera projection") {
  // 50 random plane points projected through both cameras must satisfy
  // p_dst = H p_src to well under a pixel.
  Rng rng(31);
  Intrinsics k = Intrinsics::default_camera();
  for (int trial = 0; trial < 20; ++trial) {
    const Pose world_from_src = test::random_camera_pose(rng);
    const Pose world_from_dst =
        world_from_src * test::random_offset(rng, 0.03, deg2rad(10));
    const Pose src_from_world = world_from_src.inverse();
    const Pose dst_from_world = world_from_dst.inverse();

    PlaneSpec geom;  // only the plane geometry matters here
    geom.pattern = ImageBuffer(2, 2);
    const PlaneInCamera plane_src = plane_in_camera(geom, src_from_world);
    const Homography h = plane_homography(
        k, src_from_world * world_from_dst, plane_src, "src", "dst");

    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const Vec3 x_world(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 0.0);
      const Vec2 p_src = project_world(src_from_world, k, x_world);
      const Vec2 p_dst = project_world(dst_from_world, k, x_world);
      worst = std::max(worst, (h.apply(p_src) - p_dst).norm());
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("plane homography of the inverse relative pose is the inverse map") {
  Rng rng(32);
  Intrinsics k = Intrinsics::default_camera();
  for (int trial = 0; trial < 20; ++trial) {
    const Pose world_from_src = test::random_camera_pose(rng);
    const Pose world_from_dst =
        world_from_src * test::random_offset(rng, 0.03, deg2rad(10));
    PlaneSpec geom;
    geom.pattern = ImageBuffer(2, 2);
    const PlaneInCamera plane_src = plane_in_camera(geom, world_from_src.inverse());
    const PlaneInCamera plane_dst = plane_in_camera(geom, world_from_dst.inverse());

    const Homography fwd = plane_homography(
        k, world_from_src.inverse() * world_from_dst, plane_src);
    const Homography rev = plane_homography(
        k, world_from_dst.inverse() * world_from_src, plane_dst);
    const Mat3 prod = normalize_homography(fwd.h * rev.h);
    CHECK((prod - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("project then back-project onto the known plane") {
  Rng rng(33);
  Intrinsics k = Intrinsics::default_camera();
  for (int trial = 0; trial < 50; ++trial) {
    const Pose world_from_cam = test::random_camera_pose(rng);
    const Pose cam_from_world = world_from_cam.inverse();
    const Vec3 x_world(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 0.0);
    const Vec2 px = project_world(cam_from_world, k, x_world);
    // back-project: ray through px intersected with the z=0 world plane
    const Vec3 dir_world =
        world_from_cam.rotation.rotate(k.matrix().inverse() * Vec3(px.x(), px.y(), 1));
    const Vec3 origin = world_from_cam.translation;
    const double t = -origin.z() / dir_world.z();
    const Vec3 recovered = origin + t * dir_world;
    CHECK((recovered - x_world).norm() < 1e-9);
  }
}

TEST_CASE("render scale halves when camera height doubles") {
  Intrinsics k = Intrinsics::default_camera();
  const double h = 0.09;
  Mat3 down;
  down << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  const Rotation look_down = Rotation::from_matrix(down);
  const Pose cam_lo = Pose{look_down, Vec3(0.0, 0.0, h)}.inverse();
  const Pose cam_hi = Pose{look_down, Vec3(0.0, 0.0, 2 * h)}.inverse();

  const ImageBuffer lo = render_view(cam_lo, k, test::plane());
  const ImageBuffer hi = render_view(cam_hi, k, test::plane());

  // fronto-parallel similar triangles: the high view equals the low view
  // scaled by 1/2 about the principal point
  Homography half;
  half.h << 0.5, 0, 0.5 * k.cx, 0, 0.5, 0.5 * k.cy, 0, 0, 1;
  const ImageBuffer lo_scaled = warp_homography(lo, half, k.width, k.height);
  // only the central half of the high view maps back inside the low view
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(k.width) * k.height, 0);
  for (int y = 95; y <= 265; ++y)
    for (int x = 170; x <= 470; ++x)
      mask[static_cast<std::size_t>(y) * k.width + x] = 1;
  CHECK(mean_abs_error(hi, lo_scaled, mask) <= 4.0);

  // landmark distances via projection halve exactly
  const Vec3 a_world(0.02, 0.01, 0.0), b_world(-0.015, -0.02, 0.0);
  const double dist_lo =
      (project_world(cam_lo, k, a_world) - project_world(cam_lo, k, b_world)).norm();
  const double dist_hi =
      (project_world(cam_hi, k, a_world) - project_world(cam_hi, k, b_world)).norm();
  CHECK(dist_hi == doctest::Approx(dist_lo / 2).epsilon(0.01));
}

TEST_CASE("render yawed 180 degrees equals the rotated render") {
  Intrinsics k = Intrinsics::default_camera();
  // symmetric principal point so the 180-degree image rotation is exact
  k.cx = (k.width - 1) / 2.0;
  k.cy = (k.height - 1) / 2.0;
  Mat3 down;
  down << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  const Rotation base = Rotation::from_matrix(down);
  const Vec3 pos(0.01, -0.02, 0.1);
  const Pose cam0 = Pose{base, pos}.inverse();
  const Pose cam180 =
      Pose{base * Rotation::from_axis_angle(Vec3(0, 0, kPi)), pos}.inverse();

  const ImageBuffer img0 = render_view(cam0, k, test::plane());
  const ImageBuffer img180 = render_view(cam180, k, test::plane());
  ImageBuffer rotated(img0.width, img0.height);
  for (int y = 0; y < img0.height; ++y)
    for (int x = 0; x < img0.width; ++x)
      for (int c = 0; c < 3; ++c)
        rotated.at(x, y, c) = img0.at(img0.width - 1 - x, img0.height - 1 - y, c);
  CHECK(mean_abs_error(img180, rotated) <= 1.0);
}

TEST_CASE("renderer is consistent with the analytic plane homography") {
  Rng rng(34);
  Intrinsics k = Intrinsics::default_camera();
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Pose world_from_ref = test::random_camera_pose(rng, 0.08, 0.14, 0.05, 0.25);
    const Pose world_from_new =
        world_from_ref * test::random_offset(rng, 0.02, deg2rad(8));

    const ImageBuffer ref = render_view(world_from_ref.inverse(), k, test::plane());
    const ImageBuffer direct = render_view(world_from_new.inverse(), k, test::plane());

    const PlaneInCamera plane_ref =
        plane_in_camera(test::plane(), world_from_ref.inverse());
    const Homography h = plane_homography(
        k, world_from_ref.inverse() * world_from_new, plane_ref, "ref", "new");
    const ImageBuffer warped = warp_homography(ref, h, k.width, k.height);

    // compare where both cameras actually see the pattern, away from borders
    auto mask = render_coverage(world_from_new.inverse(), k, test::plane());
    const auto mask_ref = render_coverage(world_from_ref.inverse(), k, test::plane());
    const Homography hinv = h.inverse();
    for (int y = 0; y < k.height; ++y)
      for (int x = 0; x < k.width; ++x) {
        auto& m = mask[static_cast<std::size_t>(y) * k.width + x];
        if (!m) continue;
        const Vec2 src = hinv.apply(Vec2(x, y));
        const int sx = static_cast<int>(std::round(src.x()));
        const int sy = static_cast<int>(std::round(src.y()));
        const bool src_ok = sx >= 2 && sy >= 2 && sx < k.width - 2 &&
                            sy < k.height - 2 &&
                            mask_ref[static_cast<std::size_t>(sy) * k.width + sx];
        if (!src_ok) m = 0;
      }
    worst = std::max(worst, mean_abs_error(direct, warped, mask));
  }
  CHECK(worst <= 3.0);
}

TEST_CASE("degenerate poses are rejected") {
  Intrinsics k = Intrinsics::default_camera();
  // camera below the plane
  Mat3 down;
  down << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  const Pose below = Pose{Rotation::from_matrix(down), Vec3(0, 0, -0.1)}.inverse();
  CHECK_THROWS_AS(render_view(below, k, test::plane()), DegeneratePose);

  // camera looking straight up sees nothing
  const Pose up = Pose{Rotation::identity(), Vec3(0, 0, 0.1)}.inverse();
  CHECK_THROWS_AS(render_view(up, k, test::plane()), DegeneratePose);
}

TEST_CASE("rig config json round trip") {
  const auto dir = test::scratch_dir("simcam");
  const ImageBuffer pat = generate_pattern(256, 256, 3);
  write_png(dir / "pattern.png", pat);

  CameraRig rig = CameraRig::default_rig(pat);
  save_rig(dir / "rig.json", rig, "pattern.png");
  const CameraRig back = load_rig(dir / "rig.json");

  REQUIRE(back.cameras.size() == 2);
  CHECK(back.plane.pattern.data == pat.data);
  for (std::size_t i = 0; i < 2; ++i) {
    const Pose& a = rig.cameras[i].probe_from_camera;
    const Pose& b = back.cameras[i].probe_from_camera;
    CHECK((a.translation - b.translation).norm() < 1e-9);
    CHECK(rotation_angle(a.rotation, b.rotation) < 1e-9);
    CHECK(back.cameras[i].intrinsics.fx ==
          doctest::Approx(rig.cameras[i].intrinsics.fx));
  }
  CHECK_THROWS_AS(back.camera("middle"), InvalidSpec);
}

TEST_SUITE_END();
