#pragma once

#include "sitl/geometry.hpp"
#include "sitl/servo.hpp"

#include <optional>

namespace sitl {

struct FusedPose {
  Pose pose;
  bool used_left = false;
  bool used_right = false;
  double weight_left = 0.0;
  double weight_right = 0.0;
};

/// Confidence-weighted combination of the per-camera estimates: translations
/// averaged with weights, rotations combined by Slerp with parameter
/// w_r / (w_l + w_r). A session that did not converge counts as absent; with
/// one camera the result is its pose verbatim. Throws NoEstimate when
/// neither camera contributed.
FusedPose fuse(const std::optional<ServoResult>& left,
               const std::optional<ServoResult>& right);

}  // namespace sitl
