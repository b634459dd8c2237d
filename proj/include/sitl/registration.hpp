#pragma once

#include "sitl/geometry.hpp"
#include "sitl/image.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sitl {

struct Keypoint {
  Vec2 position;          // subpixel, base-image coords
  double scale = 1.0;     // sampling step in base pixels (2^level)
  double orientation = 0; // radians
  double response = 0.0;
  int level = 0;
};

/// 256-bit oriented binary patch descriptor, Hamming-matched.
struct Descriptor {
  std::array<std::uint64_t, 4> bits{};

  int hamming(const Descriptor& o) const {
    int d = 0;
    for (int i = 0; i < 4; ++i)
      d += std::popcount(bits[i] ^ o.bits[i]);
    return d;
  }
};

struct FeatureSet {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;
  int width = 0, height = 0;  // source raster size

  std::size_t size() const { return keypoints.size(); }
};

struct DetectorConfig {
  int max_features = 1500;
  int levels = 4;                // pyramid depth
  double scale_factor = 1.26;    // per-level downsampling (3 levels/octave)
  double response_floor = 10.0;  // |det H| floor on blurred luminance
  int ring_min_diff = 3;         // FAST-style gate: ring samples differing
  double ring_contrast = 8.0;    //   from the center by more than this
  int grid_buckets = 8;          // spatial spread of the retained set
};

/// Multi-scale detector (determinant-of-Hessian scored, FAST-style ring
/// gate) plus oriented binary descriptors. Deterministic for identical
/// input; keypoints come back sorted by response, capped at max_features.
/// Throws TooFewFeatures if fewer than 8 keypoints survive.
FeatureSet detect_and_describe(const ImageBuffer& img,
                               const DetectorConfig& cfg = {});

struct Match {
  int src_index = 0;
  int dst_index = 0;
  int distance = 0;
};

struct MatchSet {
  std::vector<Match> matches;
  std::string src_id = "a";
  std::string dst_id = "b";
};

/// Exhaustive nearest-neighbor Hamming matching with cross-check and a
/// best/second-best ratio test applied in both directions (symmetric in
/// a/b up to pair ordering). Throws NoMatches if nothing survives.
MatchSet match(const FeatureSet& a, const FeatureSet& b, double ratio = 0.8);
MatchSet match_serial(const FeatureSet& a, const FeatureSet& b,
                      double ratio = 0.8);

struct RansacConfig {
  double inlier_threshold_px = 3.0;
  double confidence = 0.995;
  int max_iterations = 2000;
  int min_inliers = 12;
  std::uint64_t seed = 7;
};

/// RANSAC over 4-point minimal samples solved by normalized DLT; the final
/// model is re-fit on all inliers. Throws EstimationFailed when no
/// hypothesis reaches min_inliers.
Homography estimate_homography(const std::vector<Vec2>& src_pts,
                               const std::vector<Vec2>& dst_pts,
                               const RansacConfig& cfg = {},
                               const std::string& src_tag = "src",
                               const std::string& dst_tag = "dst");

Homography estimate_homography(const FeatureSet& a, const FeatureSet& b,
                               const MatchSet& m, const RansacConfig& cfg = {});

/// Guided re-matching around an initial homography estimate: every a-keypoint
/// is paired with the Hamming-nearest b-keypoint that lands within
/// `radius_px` of its mapped position (and within `max_distance` bits), then
/// the model is re-fit on the enlarged correspondence set. Returns the
/// refined homography with the new inlier statistics.
Homography refine_homography_guided(const FeatureSet& a, const FeatureSet& b,
                                    const Homography& initial,
                                    double radius_px = 6.0,
                                    int max_distance = 96);

/// Non-robust normalized DLT on >= 4 correspondences (used by RANSAC
/// internally and by the planar PnP path).
Mat3 dlt_homography(const std::vector<Vec2>& src_pts,
                    const std::vector<Vec2>& dst_pts);

/// JSON dump of matches/inliers for visual debugging (CLI flag).
void dump_matches_json(const std::filesystem::path& file, const FeatureSet& a,
                       const FeatureSet& b, const MatchSet& m,
                       const Homography& h);

}  // namespace sitl
