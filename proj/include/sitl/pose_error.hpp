#pragma once

#include "sitl/geometry.hpp"
#include "sitl/image.hpp"
#include "sitl/simcam.hpp"

namespace sitl {

/// 6D pose discrepancy recovered from an inter-view homography: the pose of
/// the destination (target) camera expressed in the source (simulated)
/// camera frame, as translation plus axis-angle, with the projective scale.
struct FeatureError {
  Vec3 translation = Vec3::Zero();  // meters
  Vec3 rotation = Vec3::Zero();     // theta*u, radians, norm <= pi
  double scale = 1.0;               // depth ratio xi, > 0

  double translation_norm() const { return translation.norm(); }
  double rotation_norm() const { return rotation.norm(); }

  /// The recovered relative pose (dst camera in src camera frame).
  Pose relative_pose() const {
    return {Rotation::from_axis_angle(rotation), translation};
  }
};

/// Recover (xi, R, t) from a plane-induced homography with known plane
/// normal and distance in the source camera frame, by minimizing the
/// Frobenius discrepancy between the measured homography and the model
///   xi * K R^T (I + t n^T / d) K^-1.
/// Analytic extraction seeds a short line-searched Gauss-Newton polish.
/// Throws DecompositionFailed when no candidate passes the cheirality check
/// or the residual stays above the acceptance tolerance.
FeatureError decompose_homography(const Homography& h, const Intrinsics& k,
                                  const PlaneInCamera& plane);

/// Frobenius residual of the accepted decomposition (normalized by |H|_F);
/// exposed for diagnostics and tests.
double decomposition_residual(const Homography& h, const Intrinsics& k,
                              const PlaneInCamera& plane,
                              const FeatureError& e);

/// Camera pose from >= 4 coplanar world points (plane z = 0 in the target
/// frame): DLT homography, analytic decomposition with K, SVD
/// orthonormalization, then reprojection Gauss-Newton. Returns
/// camera_from_world. Throws DegenerateConfiguration for collinear input.
Pose planar_pnp(const std::vector<Vec2>& plane_points_m,
                const std::vector<Vec2>& pixels, const Intrinsics& k);

}  // namespace sitl
