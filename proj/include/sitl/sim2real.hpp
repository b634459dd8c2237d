#pragma once

#include "sitl/geometry.hpp"

#include <filesystem>
#include <vector>

namespace sitl {

/// One calibration observation: the probe pose measured by the ground-truth
/// tracker (M) and the estimate produced by the pipeline (N).
struct CalibrationPair {
  Pose ground_truth;  // M_i, real world frame
  Pose estimate;      // N_i, virtual world frame
};

/// Fixed offset transforms bridging the simulated and real systems: the
/// corrected estimate is U * N * V.
struct Sim2RealCorrection {
  Pose world_from_virtual;      // U
  Pose probe_from_probe_sim;    // V
  double final_loss = 0.0;
  int pair_count = 0;
  double zeta = 0.1;
};

/// Recover (U, V) minimizing sum_i |t_m - t_n| + zeta * geodesic(R_m, R_n)
/// with (R_n, t_n) taken from U * N_i * V. Levenberg-Marquardt over a 12-dim
/// twist parameterization with numeric Jacobians: a smooth squared-residual
/// stage seeds a second stage on the exact (non-squared) objective.
/// Requires >= 4 pairs whose rotations span at least two axes
/// (DegenerateSet otherwise); throws NonConvergence if the loss stalls for
/// 20 consecutive iterations while still far from a minimum.
Sim2RealCorrection calibrate(const std::vector<CalibrationPair>& pairs,
                             double zeta = 0.1);

/// Per-pair loss of a candidate correction (diagnostics and tests).
double calibration_loss(const std::vector<CalibrationPair>& pairs,
                        const Pose& u, const Pose& v, double zeta);

Pose apply_correction(const Sim2RealCorrection& c, const Pose& estimate);

/// Calibration file (JSON): U, V, zeta, loss, pair count.
void save_correction(const std::filesystem::path& file,
                     const Sim2RealCorrection& c);
Sim2RealCorrection load_correction(const std::filesystem::path& file);

}  // namespace sitl
