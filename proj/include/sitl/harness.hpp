#pragma once

#include "sitl/fusion.hpp"
#include "sitl/geometry.hpp"
#include "sitl/restoration.hpp"
#include "sitl/servo.hpp"
#include "sitl/sim2real.hpp"
#include "sitl/simcam.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sitl {

enum class TrajectoryKind { u_shape, spiral, custom };

TrajectoryKind trajectory_kind_from_string(const std::string& s);
std::string to_string(TrajectoryKind k);

struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::custom;
  std::vector<TimedPose> waypoints;  // world_from_probe, stamps increasing
};

/// U-shape: two 100 mm straight legs joined by a 100 mm-radius semicircle at
/// a fixed 80 mm height, sampled uniformly by arc length. Spiral: 3/4 turn
/// with radius 100 -> 70 mm and height 70 -> 100 mm. The probe z-axis points
/// at the plane, y-axis along the path tangent.
Trajectory generate_trajectory(TrajectoryKind kind, int samples);

enum class CameraMode { left, right, dual };
CameraMode camera_mode_from_string(const std::string& s);
std::string to_string(CameraMode m);

/// Observation corruption applied to the rendered ground-truth views, plus
/// an optional planted rigid offset between the "real" system and its
/// simulated replica (the quantity sim2real calibration recovers).
struct PerturbationProfile {
  std::string name = "clean";
  double pixel_jitter_sigma_px = 0.0;   // coherent sub-pixel image shift
  double occlusion_area_fraction = 0.0; // one convex polygon of this area
  double gamma_lo = 1.0, gamma_hi = 1.0;
  double noise_sigma = 0.0;             // additive Gaussian intensity noise
  Pose planted_world_from_virtual;      // U*
  Pose planted_probe_from_probe_sim;    // V*
  bool has_planted_offset = false;

  static PerturbationProfile clean();
  /// 0.5 px jitter, 20% occlusion, gamma in [0.7, 1.4], planted 2 mm / 1
  /// degree sim2real offset.
  static PerturbationProfile paperlike();
  static PerturbationProfile from_name(const std::string& name);
};

struct ExperimentConfig {
  ServoConfig servo;
  RestorationConfig restoration;
  std::uint64_t seed = 1;
  double init_offset_trans = 0.03;        // bounded-offset initialization
  double init_offset_rot = deg2rad(10.0); //   around the ground truth
};

struct WaypointOutcome {
  int index = 0;
  double stamp = 0.0;
  Pose ground_truth;                 // real-world probe pose
  std::map<std::string, Pose> estimates;  // per camera-configuration
  std::map<std::string, bool> converged;
  std::map<std::string, double> trans_err_mm;
  std::map<std::string, double> rot_err_deg;
};

struct ModeStats {
  double avg_trans_mm = 0.0, std_trans_mm = 0.0, max_trans_mm = 0.0;
  double avg_rot_deg = 0.0, std_rot_deg = 0.0, max_rot_deg = 0.0;
  int converged_count = 0;
  int total = 0;
};

struct ErrorReport {
  CameraMode mode = CameraMode::dual;
  TrajectoryKind kind = TrajectoryKind::custom;
  std::uint64_t seed = 0;
  std::string profile_name;
  std::vector<WaypointOutcome> waypoints;
  std::map<std::string, ModeStats> stats;  // keys: left / right / dual
  double failure_rate = 0.0;               // per primary mode
};

/// Full per-waypoint pipeline: render ground-truth views (with any planted
/// sim2real offset), corrupt them, restore, servo, correct, fuse, compare to
/// ground truth. Waypoints run in parallel with content-derived seeds, so a
/// repeated pose is bit-identical and thread count never changes results.
ErrorReport run_experiment(const Trajectory& traj, const CameraRig& rig,
                           const PerturbationProfile& profile,
                           const ExperimentConfig& cfg,
                           const std::optional<Sim2RealCorrection>& correction,
                           CameraMode mode);

/// Diverse calibration poses (tilts about two axes, several yaws/heights)
/// for recovering a sim2real correction at experiment scale.
std::vector<Pose> calibration_poses(int count, std::uint64_t seed);

/// Run the estimation pipeline on the calibration poses and solve for the
/// correction (the harness-level counterpart of the calibrate CLI).
Sim2RealCorrection calibrate_from_scene(const CameraRig& rig,
                                        const PerturbationProfile& profile,
                                        const ExperimentConfig& cfg,
                                        CameraMode mode, int pose_count,
                                        double zeta = 0.1);

// --- artifact writers ------------------------------------------------------------

void write_report_json(const std::filesystem::path& file,
                       const ErrorReport& report);
void write_errors_csv(const std::filesystem::path& file,
                      const ErrorReport& report);
void write_pose_logs(const std::filesystem::path& est_file,
                     const std::filesystem::path& gt_file,
                     const ErrorReport& report);

/// Recompute a mode's statistics from raw per-waypoint errors (the same
/// arithmetic the report uses; exposed so tests can cross-check the CSV).
ModeStats aggregate_stats(const std::vector<double>& trans_mm,
                          const std::vector<double>& rot_deg,
                          const std::vector<bool>& converged);

// svg_plot.cpp
void write_trajectory_svg(const std::filesystem::path& file,
                          const ErrorReport& report);
void write_error_curves_svg(const std::filesystem::path& file,
                            const ErrorReport& report);

}  // namespace sitl
