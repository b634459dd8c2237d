#include "sitl/fusion.hpp"

#include "sitl/error.hpp"

namespace sitl {

FusedPose fuse(const std::optional<ServoResult>& left,
               const std::optional<ServoResult>& right) {
  const bool has_left = left.has_value() && left->converged;
  const bool has_right = right.has_value() && right->converged;
  if (!has_left && !has_right)
    throw NoEstimate("no converged camera estimate to fuse");

  FusedPose out;
  if (has_left && !has_right) {
    out.pose = left->pose;
    out.used_left = true;
    out.weight_left = left->weight;
    return out;
  }
  if (has_right && !has_left) {
    out.pose = right->pose;
    out.used_right = true;
    out.weight_right = right->weight;
    return out;
  }

  const double wl = left->weight;
  const double wr = right->weight;
  out.used_left = out.used_right = true;
  out.weight_left = wl;
  out.weight_right = wr;
  out.pose.translation =
      (wl * left->pose.translation + wr * right->pose.translation) / (wl + wr);
  out.pose.rotation =
      slerp(left->pose.rotation, right->pose.rotation, wr / (wl + wr));
  return out;
}

}  // namespace sitl
