#include "sitl/servo.hpp"

#include "sitl/error.hpp"

#include <cstdio>
#include <fstream>

namespace sitl {

Twist control_step(const FeatureError& e, const ServoConfig& cfg) {
  return {cfg.lambda_t * e.translation, cfg.lambda_r * e.rotation};
}

double confidence_weight(const FeatureError& e_final) {
  constexpr double mu_t = 1000.0;
  constexpr double mu_r = 50.0;
  return 1.0 /
         (1.0 + mu_t * e_final.translation_norm() + mu_r * e_final.rotation_norm());
}

ServoResult run_session(const RestoredView& target, const SessionCamera& camera,
                        const PlaneSpec& plane,
                        const Pose& init_world_from_probe,
                        const ServoConfig& cfg) {
  const FeatureSet target_features = [&] {
    try {
      return detect_and_describe(target.image);
    } catch (const Error& e) {
      throw SessionFailed("target features: " + std::string(e.name()));
    }
  }();
  return run_session(target, target_features, camera, plane,
                     init_world_from_probe, cfg);
}

ServoResult run_session(const RestoredView& target,
                        const FeatureSet& target_features,
                        const SessionCamera& camera, const PlaneSpec& plane,
                        const Pose& init_world_from_probe,
                        const ServoConfig& cfg) {
  if (cfg.max_iter < 1) throw InvalidSpec("max_iter must be >= 1");

  Pose world_from_cam = init_world_from_probe * camera.probe_from_camera;
  ServoResult result;

  RansacConfig ransac;
  ransac.seed = cfg.seed;

  for (int k = 1; k <= cfg.max_iter; ++k) {
    FeatureError e;
    try {
      const Pose cam_from_world = world_from_cam.inverse();
      const ImageBuffer sim = render_view(cam_from_world, camera.intrinsics, plane);
      const FeatureSet sim_features = detect_and_describe(sim);
      MatchSet m = match(sim_features, target_features);
      m.src_id = "sim";
      m.dst_id = "target";
      Homography h =
          estimate_homography(sim_features, target_features, m, ransac);
      h = refine_homography_guided(sim_features, target_features, h);
      const PlaneInCamera plane_cam = plane_in_camera(plane, cam_from_world);
      e = decompose_homography(h, camera.intrinsics, plane_cam);
    } catch (const Error& err) {
      throw SessionFailed("iteration " + std::to_string(k) + ": " + err.name());
    }

    result.trace.push_back({k, e.translation_norm(), e.rotation_norm()});
    result.iterations = k;
    result.residual = e;

    if (e.translation_norm() < cfg.trans_tol && e.rotation_norm() < cfg.rot_tol) {
      result.converged = true;
      break;
    }
    if (k == cfg.max_iter) break;  // NotConverged: returned with the flag down

    world_from_cam =
        integrate_twist(world_from_cam, control_step(e, cfg), cfg.dt);
  }

  result.pose = world_from_cam * camera.probe_from_camera.inverse();
  result.weight = confidence_weight(result.residual);
  return result;
}

Pose random_init_pose(Rng& rng) {
  const double x = rng.uniform(-0.1, 0.1);
  const double y = rng.uniform(-0.1, 0.1);
  const double z = rng.uniform(0.10, 0.15);
  const double tilt = rng.uniform(0.0, deg2rad(10));
  const double tilt_dir = rng.uniform(0.0, 2.0 * kPi);
  const double yaw = rng.uniform(0.0, 2.0 * kPi);
  // probe +z points at the workspace
  Mat3 base;
  base << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  const Rotation r =
      Rotation::from_matrix(base) * Rotation::from_axis_angle(Vec3(0, 0, yaw)) *
      Rotation::from_axis_angle(
          Vec3(tilt * std::cos(tilt_dir), tilt * std::sin(tilt_dir), 0));
  return {r, Vec3(x, y, z)};
}

void write_trace_csv(const std::filesystem::path& file,
                     const std::vector<TracePoint>& trace) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << "iter,trans_err_mm,rot_err_deg\n";
  char buf[128];
  for (const auto& t : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", t.iteration,
                  t.trans_err * 1000.0, rad2deg(t.rot_err));
    out << buf;
  }
}

}  // namespace sitl
