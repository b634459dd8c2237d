#include "sitl/harness.hpp"

#include "sitl/error.hpp"
#include "sitl/parallel.hpp"
#include "sitl/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace sitl {

using json = nlohmann::ordered_json;

TrajectoryKind trajectory_kind_from_string(const std::string& s) {
  if (s == "u_shape") return TrajectoryKind::u_shape;
  if (s == "spiral") return TrajectoryKind::spiral;
  if (s == "custom") return TrajectoryKind::custom;
  throw UnknownKind("unknown trajectory kind '" + s + "'");
}

std::string to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::u_shape: return "u_shape";
    case TrajectoryKind::spiral: return "spiral";
    default: return "custom";
  }
}

CameraMode camera_mode_from_string(const std::string& s) {
  if (s == "left") return CameraMode::left;
  if (s == "right") return CameraMode::right;
  if (s == "dual") return CameraMode::dual;
  throw UnknownKind("unknown camera mode '" + s + "'");
}

std::string to_string(CameraMode m) {
  switch (m) {
    case CameraMode::left: return "left";
    case CameraMode::right: return "right";
    default: return "dual";
  }
}

namespace {

Rotation tangent_orientation(const Vec3& tangent) {
  // probe z at the plane, y along the path tangent, x completing the frame
  const Vec3 z(0, 0, -1);
  Vec3 y = tangent;
  y.z() = 0.0;
  if (y.norm() < 1e-12) y = Vec3(0, 1, 0);
  y.normalize();
  const Vec3 x = y.cross(z);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Rotation::from_matrix(r);
}

}  // namespace

Trajectory generate_trajectory(TrajectoryKind kind, int samples) {
  if (samples < 2) throw InvalidSpec("a trajectory needs >= 2 waypoints");
  Trajectory traj;
  traj.kind = kind;

  if (kind == TrajectoryKind::u_shape) {
    const double leg = 0.1, radius = 0.1, height = 0.08;
    const double total = 2 * leg + kPi * radius;
    for (int i = 0; i < samples; ++i) {
      const double s = total * i / (samples - 1);
      Vec3 p, tangent;
      if (s < leg) {
        p = Vec3(-0.05 + s, -radius, height);
        tangent = Vec3(1, 0, 0);
      } else if (s < leg + kPi * radius) {
        const double theta = -kPi / 2 + (s - leg) / radius;
        p = Vec3(0.05 + radius * std::cos(theta), radius * std::sin(theta),
                 height);
        tangent = Vec3(-std::sin(theta), std::cos(theta), 0);
      } else {
        p = Vec3(0.05 - (s - leg - kPi * radius), radius, height);
        tangent = Vec3(-1, 0, 0);
      }
      traj.waypoints.push_back({static_cast<double>(i),
                                Pose{tangent_orientation(tangent), p}});
    }
  } else if (kind == TrajectoryKind::spiral) {
    for (int i = 0; i < samples; ++i) {
      const double f = static_cast<double>(i) / (samples - 1);
      const double theta = f * 1.5 * kPi;
      const double r = 0.10 + f * (0.07 - 0.10);
      const double z = 0.07 + f * (0.10 - 0.07);
      const Vec3 p(r * std::cos(theta), r * std::sin(theta), z);
      // tangent of the planar projection
      const double dr = (0.07 - 0.10) / (1.5 * kPi);
      const Vec3 tangent(dr * std::cos(theta) - r * std::sin(theta),
                         dr * std::sin(theta) + r * std::cos(theta), 0.0);
      traj.waypoints.push_back({static_cast<double>(i),
                                Pose{tangent_orientation(tangent), p}});
    }
  } else {
    throw UnknownKind("custom trajectories come from pose files");
  }
  return traj;
}

PerturbationProfile PerturbationProfile::clean() { return {}; }

PerturbationProfile PerturbationProfile::paperlike() {
  PerturbationProfile p;
  p.name = "paperlike";
  p.pixel_jitter_sigma_px = 0.5;
  p.occlusion_area_fraction = 0.20;
  p.gamma_lo = 0.7;
  p.gamma_hi = 1.4;
  p.planted_world_from_virtual =
      Pose{Rotation::from_axis_angle(Vec3(0, 0, deg2rad(0.6))),
           Vec3(1.2e-3, -0.8e-3, 0.5e-3)};
  p.planted_probe_from_probe_sim =
      Pose{Rotation::from_axis_angle(Vec3(deg2rad(0.5), deg2rad(-0.4), 0)),
           Vec3(-0.7e-3, 1.0e-3, -0.9e-3)};
  p.has_planted_offset = true;
  return p;
}

PerturbationProfile PerturbationProfile::from_name(const std::string& name) {
  if (name == "clean") return clean();
  if (name == "paperlike") return paperlike();
  throw UnknownKind("unknown perturbation profile '" + name + "'");
}

namespace {

ImageBuffer corrupt_view(const ImageBuffer& clean,
                         const PerturbationProfile& profile, Rng& rng) {
  ImageBuffer img = clean;
  if (profile.pixel_jitter_sigma_px > 0.0) {
    img = inject_pixel_shift(img, rng.normal(0, profile.pixel_jitter_sigma_px),
                             rng.normal(0, profile.pixel_jitter_sigma_px));
  }
  if (profile.occlusion_area_fraction > 0.0) {
    // random convex quad of roughly the requested area fraction
    const double frac = profile.occlusion_area_fraction;
    const double w = img.width * std::sqrt(frac * 2.0);
    const double h = img.height * std::sqrt(frac * 2.0) * 0.75;
    const double cx = rng.uniform(0.2, 0.8) * img.width;
    const double cy = rng.uniform(0.2, 0.8) * img.height;
    OcclusionSpec occ;
    occ.polygon = {Vec2(cx - w / 2, cy - h / 2), Vec2(cx + w / 2, cy - h / 3),
                   Vec2(cx + w / 3, cy + h / 2), Vec2(cx - w / 2, cy + h / 3)};
    occ.fill_rgb[0] = 70;
    occ.fill_rgb[1] = 60;
    occ.fill_rgb[2] = 55;
    img = inject_occlusion(img, occ, rng.next_u64());
  }
  if (profile.gamma_lo != 1.0 || profile.gamma_hi != 1.0) {
    img = inject_gamma(img, rng.uniform(profile.gamma_lo, profile.gamma_hi));
  }
  if (profile.noise_sigma > 0.0) {
    img = inject_gaussian_noise(img, profile.noise_sigma, rng.next_u64());
  }
  return img;
}

struct CameraRun {
  bool ok = false;
  ServoResult result;
};

// One camera's restore+servo chain for one waypoint.
CameraRun run_camera(const RigCamera& cam, const Pose& world_from_probe_gt,
                     const PerturbationProfile& profile, const CameraRig& rig,
                     const FeatureSet& pattern_features,
                     const ExperimentConfig& cfg, const Pose& init_probe,
                     Rng& rng) {
  CameraRun out;
  try {
    // the "real" scene: planted offsets displace the pattern (U*) and the
    // camera mount (V*) relative to the simulated replica
    Pose world_from_camera_real =
        world_from_probe_gt * cam.probe_from_camera;
    if (profile.has_planted_offset) {
      world_from_camera_real = profile.planted_world_from_virtual.inverse() *
                               world_from_probe_gt *
                               profile.planted_probe_from_probe_sim.inverse() *
                               cam.probe_from_camera;
    }
    const ImageBuffer clean = render_view(world_from_camera_real.inverse(),
                                          cam.intrinsics, rig.plane);
    const ImageBuffer live = corrupt_view(clean, profile, rng);

    const RestoredView restored =
        restore_view(live, rig.plane.pattern, pattern_features, cfg.restoration);

    SessionCamera session_cam{cam.intrinsics, cam.probe_from_camera};
    ServoConfig servo_cfg = cfg.servo;
    servo_cfg.seed = rng.next_u64();
    out.result = run_session(restored, session_cam, rig.plane, init_probe,
                             servo_cfg);
    out.ok = true;
  } catch (const Error&) {
    out.ok = false;
  }
  return out;
}

double trans_err_mm(const Pose& est, const Pose& gt) {
  return (est.translation - gt.translation).norm() * 1000.0;
}

double rot_err_deg(const Pose& est, const Pose& gt) {
  return rad2deg(rotation_angle(est.rotation, gt.rotation));
}

}  // namespace

ModeStats aggregate_stats(const std::vector<double>& trans_mm,
                          const std::vector<double>& rot_deg,
                          const std::vector<bool>& converged) {
  ModeStats s;
  s.total = static_cast<int>(converged.size());
  double st = 0, sr = 0, st2 = 0, sr2 = 0;
  for (std::size_t i = 0; i < converged.size(); ++i) {
    if (!converged[i]) continue;
    ++s.converged_count;
    st += trans_mm[i];
    sr += rot_deg[i];
    st2 += trans_mm[i] * trans_mm[i];
    sr2 += rot_deg[i] * rot_deg[i];
    s.max_trans_mm = std::max(s.max_trans_mm, trans_mm[i]);
    s.max_rot_deg = std::max(s.max_rot_deg, rot_deg[i]);
  }
  if (s.converged_count > 0) {
    const double n = s.converged_count;
    s.avg_trans_mm = st / n;
    s.avg_rot_deg = sr / n;
    s.std_trans_mm = std::sqrt(std::max(0.0, st2 / n - s.avg_trans_mm * s.avg_trans_mm));
    s.std_rot_deg = std::sqrt(std::max(0.0, sr2 / n - s.avg_rot_deg * s.avg_rot_deg));
  }
  return s;
}

ErrorReport run_experiment(const Trajectory& traj, const CameraRig& rig,
                           const PerturbationProfile& profile,
                           const ExperimentConfig& cfg,
                           const std::optional<Sim2RealCorrection>& correction,
                           CameraMode mode) {
  if (traj.waypoints.size() < 2)
    throw InvalidSpec("trajectory needs >= 2 waypoints");

  const FeatureSet pattern_features =
      detect_pattern_features(rig.plane.pattern, cfg.restoration);

  const bool want_left = mode != CameraMode::right;
  const bool want_right = mode != CameraMode::left;
  const std::size_t n = traj.waypoints.size();
  std::vector<WaypointOutcome> outcomes(n);

  parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t i) {
    const TimedPose& wp = traj.waypoints[i];
    WaypointOutcome& out = outcomes[i];
    out.index = static_cast<int>(i);
    out.stamp = wp.stamp;
    out.ground_truth = wp.pose;

    // seed from the waypoint pose content: identical poses behave
    // identically, and the schedule cannot influence anything
    double pose_bytes[7] = {wp.pose.translation.x(), wp.pose.translation.y(),
                            wp.pose.translation.z(), wp.pose.rotation.w,
                            wp.pose.rotation.x, wp.pose.rotation.y,
                            wp.pose.rotation.z};
    Rng rng(hash_bytes(pose_bytes, sizeof(pose_bytes), cfg.seed));

    const Pose init_probe =
        wp.pose * [&] {
          Vec3 dir(rng.normal(), rng.normal(), rng.normal());
          if (dir.norm() < 1e-12) dir = Vec3(1, 0, 0);
          dir.normalize();
          Vec3 axis(rng.normal(), rng.normal(), rng.normal());
          if (axis.norm() < 1e-12) axis = Vec3(0, 0, 1);
          axis.normalize();
          return Pose{Rotation::from_axis_angle(
                          axis * rng.uniform(0.0, cfg.init_offset_rot)),
                      dir * rng.uniform(0.0, cfg.init_offset_trans)};
        }();

    CameraRun left, right;
    Rng rng_left = rng.fork(1);
    Rng rng_right = rng.fork(2);
    if (want_left)
      left = run_camera(rig.camera("left"), wp.pose, profile, rig,
                        pattern_features, cfg, init_probe, rng_left);
    if (want_right && rig.cameras.size() > 1)
      right = run_camera(rig.camera("right"), wp.pose, profile, rig,
                         pattern_features, cfg, init_probe, rng_right);

    auto corrected = [&](const Pose& p) {
      return correction ? apply_correction(*correction, p) : p;
    };

    if (want_left) {
      const bool ok = left.ok && left.result.converged;
      out.converged["left"] = ok;
      if (ok) {
        const Pose est = corrected(left.result.pose);
        out.estimates["left"] = est;
        out.trans_err_mm["left"] = trans_err_mm(est, wp.pose);
        out.rot_err_deg["left"] = rot_err_deg(est, wp.pose);
      }
    }
    if (want_right && rig.cameras.size() > 1) {
      const bool ok = right.ok && right.result.converged;
      out.converged["right"] = ok;
      if (ok) {
        const Pose est = corrected(right.result.pose);
        out.estimates["right"] = est;
        out.trans_err_mm["right"] = trans_err_mm(est, wp.pose);
        out.rot_err_deg["right"] = rot_err_deg(est, wp.pose);
      }
    }
    if (mode == CameraMode::dual) {
      // fuse the corrected per-camera estimates (correction precedes fusion)
      std::optional<ServoResult> l, r;
      if (left.ok) {
        l = left.result;
        l->pose = corrected(l->pose);
      }
      if (right.ok) {
        r = right.result;
        r->pose = corrected(r->pose);
      }
      try {
        const FusedPose fused = fuse(l, r);
        out.converged["dual"] = true;
        out.estimates["dual"] = fused.pose;
        out.trans_err_mm["dual"] = trans_err_mm(fused.pose, wp.pose);
        out.rot_err_deg["dual"] = rot_err_deg(fused.pose, wp.pose);
      } catch (const NoEstimate&) {
        out.converged["dual"] = false;
      }
    }
  });

  ErrorReport report;
  report.mode = mode;
  report.kind = traj.kind;
  report.seed = cfg.seed;
  report.profile_name = profile.name;
  report.waypoints = std::move(outcomes);

  for (const std::string& key : {std::string("left"), std::string("right"),
                                 std::string("dual")}) {
    std::vector<double> t, r;
    std::vector<bool> conv;
    for (const auto& wp : report.waypoints) {
      const auto it = wp.converged.find(key);
      if (it == wp.converged.end()) continue;
      conv.push_back(it->second);
      t.push_back(it->second ? wp.trans_err_mm.at(key) : 0.0);
      r.push_back(it->second ? wp.rot_err_deg.at(key) : 0.0);
    }
    if (!conv.empty()) report.stats[key] = aggregate_stats(t, r, conv);
  }

  const std::string primary = to_string(mode);
  if (report.stats.count(primary)) {
    const ModeStats& s = report.stats[primary];
    report.failure_rate =
        s.total > 0
            ? 1.0 - static_cast<double>(s.converged_count) / s.total
            : 1.0;
  }
  return report;
}

std::vector<Pose> calibration_poses(int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Pose> poses;
  Mat3 base;
  base << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  for (int i = 0; i < count; ++i) {
    const double yaw = rng.uniform(0, 2 * kPi);
    const double rx = rng.uniform(-deg2rad(8), deg2rad(8));
    const double ry = rng.uniform(-deg2rad(8), deg2rad(8));
    poses.push_back({Rotation::from_matrix(base) *
                         Rotation::from_axis_angle(Vec3(0, 0, yaw)) *
                         Rotation::from_axis_angle(Vec3(rx, ry, 0)),
                     Vec3(rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08),
                          rng.uniform(0.08, 0.12))});
  }
  return poses;
}

Sim2RealCorrection calibrate_from_scene(const CameraRig& rig,
                                        const PerturbationProfile& profile,
                                        const ExperimentConfig& cfg,
                                        CameraMode mode, int pose_count,
                                        double zeta) {
  Trajectory traj;
  traj.kind = TrajectoryKind::custom;
  const auto poses = calibration_poses(pose_count, cfg.seed ^ 0xCA11B7A7Eull);
  for (std::size_t i = 0; i < poses.size(); ++i)
    traj.waypoints.push_back({static_cast<double>(i), poses[i]});

  const ErrorReport rep =
      run_experiment(traj, rig, profile, cfg, std::nullopt, mode);
  const std::string key = to_string(mode);
  std::vector<CalibrationPair> pairs;
  for (const auto& wp : rep.waypoints) {
    const auto it = wp.converged.find(key);
    if (it == wp.converged.end() || !it->second) continue;
    pairs.push_back({wp.ground_truth, wp.estimates.at(key)});
  }
  return calibrate(pairs, zeta);
}

// --- writers ----------------------------------------------------------------------

namespace {

json stats_json(const ModeStats& s) {
  return {{"avg_trans_mm", s.avg_trans_mm}, {"std_trans_mm", s.std_trans_mm},
          {"max_drift_trans_mm", s.max_trans_mm},
          {"avg_rot_deg", s.avg_rot_deg},   {"std_rot_deg", s.std_rot_deg},
          {"max_drift_rot_deg", s.max_rot_deg},
          {"converged", s.converged_count}, {"total", s.total}};
}

}  // namespace

void write_report_json(const std::filesystem::path& file,
                       const ErrorReport& report) {
  json j;
  j["trajectory"] = to_string(report.kind);
  j["camera_mode"] = to_string(report.mode);
  j["profile"] = report.profile_name;
  j["seed"] = report.seed;
  j["waypoints"] = report.waypoints.size();
  j["failure_rate"] = report.failure_rate;
  j["results"] = json::object();
  for (const auto& [key, stats] : report.stats) j["results"][key] = stats_json(stats);
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << j.dump(2) << "\n";
}

void write_errors_csv(const std::filesystem::path& file,
                      const ErrorReport& report) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << "idx,trans_mm,rot_deg,camera_mode,converged\n";
  char buf[160];
  for (const auto& wp : report.waypoints) {
    for (const auto& [key, conv] : wp.converged) {
      if (conv) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%s,1\n", wp.index,
                      wp.trans_err_mm.at(key), wp.rot_err_deg.at(key),
                      key.c_str());
      } else {
        std::snprintf(buf, sizeof(buf), "%d,,,%s,0\n", wp.index, key.c_str());
      }
      out << buf;
    }
  }
}

void write_pose_logs(const std::filesystem::path& est_file,
                     const std::filesystem::path& gt_file,
                     const ErrorReport& report) {
  const std::string key = to_string(report.mode);
  std::vector<TimedPose> est, gt;
  for (const auto& wp : report.waypoints) {
    gt.push_back({wp.stamp, wp.ground_truth});
    const auto it = wp.converged.find(key);
    if (it != wp.converged.end() && it->second)
      est.push_back({wp.stamp, wp.estimates.at(key)});
  }
  write_pose_csv(est_file, est);
  write_pose_csv(gt_file, gt);
}

}  // namespace sitl
