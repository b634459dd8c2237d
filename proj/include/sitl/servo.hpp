#pragma once

#include "sitl/geometry.hpp"
#include "sitl/pose_error.hpp"
#include "sitl/registration.hpp"
#include "sitl/restoration.hpp"
#include "sitl/rng.hpp"
#include "sitl/simcam.hpp"

#include <filesystem>
#include <vector>

namespace sitl {

struct ServoConfig {
  double lambda_t = 0.5;            // translational gain
  double lambda_r = 0.5;            // rotational gain
  double trans_tol = 0.2e-3;        // meters
  double rot_tol = deg2rad(0.2);    // radians
  int max_iter = 20;
  double dt = 1.0;                  // seconds per control step
  std::uint64_t seed = 7;           // feeds the per-iteration RANSAC
};

struct TracePoint {
  int iteration = 0;
  double trans_err = 0.0;  // meters
  double rot_err = 0.0;    // radians
};

struct ServoResult {
  Pose pose;               // probe in the (virtual) world frame
  double weight = 0.0;     // confidence in (0, 1]
  int iterations = 0;
  bool converged = false;
  FeatureError residual;   // feature error at the last evaluation
  std::vector<TracePoint> trace;
};

/// Proportional control law: v = (lambda_t * t, lambda_r * theta_u),
/// expressed in the simulated camera's own frame.
Twist control_step(const FeatureError& e, const ServoConfig& cfg);

/// w = 1 / (1 + mu_t |t| + mu_r |theta_u|) with mu_t = 1000, mu_r = 50.
double confidence_weight(const FeatureError& e_final);

struct SessionCamera {
  Intrinsics intrinsics;
  Pose probe_from_camera;  // pose of the camera in the probe frame
};

/// One estimation session: iteratively render the simulated view, register
/// it against the target, decompose the homography into a 6D feature error,
/// and step the pose until both error norms drop below tolerance or
/// max_iter is reached (converged = false in that case, result still
/// returned). Throws SessionFailed when registration or decomposition fails
/// mid-loop. The returned pose is the probe pose derived from the converged
/// camera pose via the rig extrinsic.
ServoResult run_session(const RestoredView& target, const SessionCamera& camera,
                        const PlaneSpec& plane,
                        const Pose& init_world_from_probe,
                        const ServoConfig& cfg = {});

/// Session variant with precomputed target features (callers that run many
/// sessions against the same target).
ServoResult run_session(const RestoredView& target,
                        const FeatureSet& target_features,
                        const SessionCamera& camera, const PlaneSpec& plane,
                        const Pose& init_world_from_probe,
                        const ServoConfig& cfg = {});

/// Default random initialization: probe above the pattern interior, height
/// 0.10-0.15 m, tilt <= 10 degrees, any yaw.
Pose random_init_pose(Rng& rng);

/// Per-iteration error trace as CSV: iter,trans_err_mm,rot_err_deg.
void write_trace_csv(const std::filesystem::path& file,
                     const std::vector<TracePoint>& trace);

}  // namespace sitl
