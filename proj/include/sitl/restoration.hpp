#pragma once

#include "sitl/image.hpp"
#include "sitl/registration.hpp"

#include <optional>

namespace sitl {

/// Standardized, occlusion-free observation: the full workspace pattern
/// warped through the registered pattern-to-view homography.
struct RestoredView {
  ImageBuffer image;
  Homography pattern_to_view;
  double inlier_ratio = 0.0;

  /// Wrap an existing frame (e.g. a clean render) as a servo target without
  /// running restoration.
  static RestoredView from_image(ImageBuffer img);
};

struct RestorationConfig {
  DetectorConfig pattern_detector{.max_features = 16000, .levels = 5};
  DetectorConfig live_detector{.max_features = 1500, .levels = 6};
  RansacConfig ransac;
  double match_ratio = 0.85;       // looser than the in-domain default; the
                                   // pattern/view blur mismatch costs bits
  double retry_match_ratio = 0.9;  // second attempt when stage 1 fails
  double min_inlier_ratio = 0.15;  // gate on the final registration ratio
  double min_photometric_ncc = 0.3;  // restored-vs-live verification gate
};

/// Pattern features are reused across frames; compute them once per pattern.
FeatureSet detect_pattern_features(const ImageBuffer& pattern,
                                   const RestorationConfig& cfg = {});

/// Register the known workspace pattern to the live view and warp the full
/// pattern into the camera raster. Occluded and lighting-corrupted regions
/// are thereby replaced by ideal texture. Throws RestorationFailed when
/// registration fails or falls below the inlier-ratio gate.
RestoredView restore_view(const ImageBuffer& live, const ImageBuffer& pattern,
                          const RestorationConfig& cfg = {});

/// Variant with precomputed pattern features (the hot path).
RestoredView restore_view(const ImageBuffer& live,
                          const ImageBuffer& pattern,
                          const FeatureSet& pattern_features,
                          const RestorationConfig& cfg = {});

/// Side-by-side (live | restored) debug composite.
ImageBuffer side_by_side(const ImageBuffer& live, const ImageBuffer& restored);

}  // namespace sitl
