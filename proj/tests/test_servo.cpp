#include "sitl/servo.hpp"

#include "sitl/error.hpp"
#include "sitl/rng.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <numeric>

using namespace sitl;

namespace {

SessionCamera plain_camera() {
  SessionCamera cam;
  cam.intrinsics = Intrinsics::default_camera();
  cam.probe_from_camera = Pose::identity();
  return cam;
}

// exact relative feature error between two camera poses (no imaging)
FeatureError exact_error(const Pose& world_from_sim, const Pose& world_from_target) {
  const Pose rel = world_from_sim.inverse() * world_from_target;
  FeatureError e;
  e.translation = rel.translation;
  e.rotation = axis_angle(rel.rotation);
  return e;
}

}  // namespace

TEST_SUITE_BEGIN("servo");

TEST_CASE("control law scales the feature error by the gains") {
  ServoConfig cfg;
  FeatureError zero;
  const Twist v0 = control_step(zero, cfg);
  CHECK(v0.linear.norm() == 0.0);
  CHECK(v0.angular.norm() == 0.0);

  FeatureError et;
  et.translation = Vec3(0.002, 0, 0);
  const Twist vt = control_step(et, cfg);
  CHECK((vt.linear - Vec3(0.001, 0, 0)).norm() < 1e-15);

  FeatureError er;
  er.rotation = Vec3(0, 0, 0.2);
  const Twist vr = control_step(er, cfg);
  CHECK((vr.angular - Vec3(0, 0, 0.1)).norm() < 1e-15);
}

TEST_CASE("confidence weight follows the inverse form") {
  FeatureError zero;
  CHECK(confidence_weight(zero) == doctest::Approx(1.0).epsilon(1e-15));

  FeatureError et;
  et.translation = Vec3(0.001, 0, 0);
  CHECK(confidence_weight(et) == doctest::Approx(0.5).epsilon(1e-12));

  FeatureError er;
  er.rotation = Vec3(0, 0.02, 0);
  CHECK(confidence_weight(er) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("noise-free contraction of the closed loop") {
  // pure control dynamics with exact feature errors: each error norm must
  // contract by at least (1 - min(gain)*dt + 5% slack) per step
  Rng rng(81);
  ServoConfig cfg;
  const double factor = 1.0 - std::min(cfg.lambda_t, cfg.lambda_r) * cfg.dt + 0.05;
  for (int trial = 0; trial < 50; ++trial) {
    const Pose world_from_target = test::random_camera_pose(rng);
    Pose world_from_sim =
        world_from_target * test::random_offset(rng, 0.03, deg2rad(10));
    FeatureError e = exact_error(world_from_sim, world_from_target);
    for (int k = 0; k < 25; ++k) {
      if (e.translation_norm() < cfg.trans_tol && e.rotation_norm() < cfg.rot_tol)
        break;
      world_from_sim =
          integrate_twist(world_from_sim, control_step(e, cfg), cfg.dt);
      const FeatureError next = exact_error(world_from_sim, world_from_target);
      if (e.translation_norm() >= cfg.trans_tol)
        CHECK(next.translation_norm() <= factor * e.translation_norm() + 1e-12);
      if (e.rotation_norm() >= cfg.rot_tol)
        CHECK(next.rotation_norm() <= factor * e.rotation_norm() + 1e-12);
      e = next;
    }
    CHECK(e.translation_norm() < cfg.trans_tol);
    CHECK(e.rotation_norm() < cfg.rot_tol);
  }
}

TEST_CASE("aligned target converges immediately") {
  Rng rng(82);
  const Pose world_from_probe = test::random_camera_pose(rng, 0.10, 0.13, 0.04, 0.15);
  const SessionCamera cam = plain_camera();
  const ImageBuffer target_img =
      render_view((world_from_probe * cam.probe_from_camera).inverse(),
                  cam.intrinsics, test::plane());
  const RestoredView target = RestoredView::from_image(target_img);

  const ServoResult r =
      run_session(target, cam, test::plane(), world_from_probe);
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  CHECK(r.residual.translation_norm() < 1e-4);
  CHECK(r.weight > 0.9);
  CHECK(r.trace.size() == 1);
  CHECK((r.pose.translation - world_from_probe.translation).norm() < 2e-4);
}

TEST_CASE("30 mm / 10 degree offsets converge within budget") {
  Rng rng(83);
  const SessionCamera cam = plain_camera();
  std::vector<int> iterations;
  for (int trial = 0; trial < 6; ++trial) {
    const Pose world_from_probe =
        test::random_camera_pose(rng, 0.10, 0.14, 0.04, 0.1);
    const ImageBuffer target_img =
        render_view((world_from_probe * cam.probe_from_camera).inverse(),
                    cam.intrinsics, test::plane());
    const RestoredView target = RestoredView::from_image(target_img);
    const Pose init =
        world_from_probe * test::random_offset(rng, 0.03, deg2rad(10));

    const ServoResult r = run_session(target, cam, test::plane(), init);
    REQUIRE(r.converged);
    CHECK(r.iterations <= 20);
    iterations.push_back(r.iterations);
    CHECK((r.pose.translation - world_from_probe.translation).norm() < 0.2e-3);
    CHECK(rotation_angle(r.pose.rotation, world_from_probe.rotation) <
          deg2rad(0.2));
    // converged means the final measured residual is below both tolerances
    CHECK(r.residual.translation_norm() < 0.2e-3);
    CHECK(r.residual.rotation_norm() < deg2rad(0.2));
  }
  const double mean_iters =
      std::accumulate(iterations.begin(), iterations.end(), 0.0) /
      iterations.size();
  CHECK(mean_iters <= 13.0);
}

TEST_CASE("a black target fails the session") {
  Rng rng(84);
  const Pose init = test::random_camera_pose(rng, 0.11, 0.12, 0.02, 0.1);
  const RestoredView target = RestoredView::from_image(ImageBuffer(640, 360, 0));
  CHECK_THROWS_AS(run_session(target, plain_camera(), test::plane(), init),
                  SessionFailed);
}

TEST_CASE("fixed seed gives a bit-identical result") {
  Rng rng(85);
  const SessionCamera cam = plain_camera();
  const Pose world_from_probe = test::random_camera_pose(rng, 0.10, 0.13, 0.03, 0.1);
  const ImageBuffer target_img =
      render_view((world_from_probe * cam.probe_from_camera).inverse(),
                  cam.intrinsics, test::plane());
  const RestoredView target = RestoredView::from_image(target_img);
  const Pose init = world_from_probe * test::random_offset(rng, 0.02, deg2rad(6));

  const ServoResult a = run_session(target, cam, test::plane(), init);
  const ServoResult b = run_session(target, cam, test::plane(), init);
  CHECK(a.iterations == b.iterations);
  CHECK(a.converged == b.converged);
  CHECK(a.pose.translation == b.pose.translation);
  CHECK(a.pose.rotation.w == b.pose.rotation.w);
  CHECK(a.pose.rotation.x == b.pose.rotation.x);
  CHECK(a.weight == b.weight);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].trans_err == b.trace[i].trans_err);
    CHECK(a.trace[i].rot_err == b.trace[i].rot_err);
  }
}

TEST_CASE("trace csv is written in mm and degrees") {
  const auto dir = test::scratch_dir("servo");
  std::vector<TracePoint> trace{{1, 0.0031, deg2rad(2.0)}, {2, 0.0005, deg2rad(0.4)}};
  write_trace_csv(dir / "trace.csv", trace);
  std::ifstream in(dir / "trace.csv");
  std::string header, row1;
  std::getline(in, header);
  std::getline(in, row1);
  CHECK(header == "iter,trans_err_mm,rot_err_deg");
  int it = 0;
  double mm = 0, deg = 0;
  char comma;
  std::istringstream ss(row1);
  ss >> it >> comma >> mm >> comma >> deg;
  CHECK(it == 1);
  CHECK(mm == doctest::Approx(3.1).epsilon(1e-12));
  CHECK(deg == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_SUITE_END();
