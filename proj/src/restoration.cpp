#include "sitl/restoration.hpp"

#include "sitl/error.hpp"

namespace sitl {

RestoredView RestoredView::from_image(ImageBuffer img) {
  RestoredView out;
  out.image = std::move(img);
  out.pattern_to_view.src_frame = "pattern";
  out.pattern_to_view.dst_frame = "view";
  out.inlier_ratio = 1.0;
  return out;
}

FeatureSet detect_pattern_features(const ImageBuffer& pattern,
                                   const RestorationConfig& cfg) {
  return detect_and_describe(pattern, cfg.pattern_detector);
}

RestoredView restore_view(const ImageBuffer& live, const ImageBuffer& pattern,
                          const RestorationConfig& cfg) {
  return restore_view(live, pattern, detect_pattern_features(pattern, cfg), cfg);
}

RestoredView restore_view(const ImageBuffer& live, const ImageBuffer& pattern,
                          const FeatureSet& pattern_features,
                          const RestorationConfig& cfg) {
  try {
    const FeatureSet live_features = detect_and_describe(live, cfg.live_detector);

    std::string failure = "no attempt";
    for (const double ratio : {cfg.match_ratio, cfg.retry_match_ratio}) {
      Homography h;
      try {
        MatchSet m = match(pattern_features, live_features, ratio);
        m.src_id = "pattern";
        m.dst_id = "view";
        h = estimate_homography(pattern_features, live_features, m, cfg.ransac);
      } catch (const Error& e) {
        failure = e.name();
        continue;
      }
      // two guided passes: widen the correspondence set, then tighten
      h = refine_homography_guided(pattern_features, live_features, h, 6.0, 96);
      h = refine_homography_guided(pattern_features, live_features, h, 3.0, 96);
      if (h.inlier_ratio < cfg.min_inlier_ratio) {
        failure = "inlier ratio " + std::to_string(h.inlier_ratio) +
                  " below gate";
        continue;
      }
      RestoredView out;
      out.image = warp_homography(pattern, h, live.width, live.height);
      // Photometric verification: a hallucinated model warps unrelated
      // texture into the frame and decorrelates from the live view even
      // though enough stray correspondences supported it.
      const double corr = luminance_ncc(out.image, live);
      if (corr < cfg.min_photometric_ncc) {
        failure = "photometric verification failed (ncc " +
                  std::to_string(corr) + ")";
        continue;
      }
      out.pattern_to_view = h;
      out.inlier_ratio = h.inlier_ratio;
      return out;
    }
    throw RestorationFailed(failure);
  } catch (const RestorationFailed&) {
    throw;
  } catch (const Error& e) {
    throw RestorationFailed(e.name());
  }
}

ImageBuffer side_by_side(const ImageBuffer& live, const ImageBuffer& restored) {
  if (!live.same_size(restored))
    throw InvalidSpec("side_by_side inputs must match in size");
  ImageBuffer out(live.width * 2 + 4, live.height, 255);
  for (int y = 0; y < live.height; ++y)
    for (int x = 0; x < live.width; ++x)
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = live.at(x, y, c);
        out.at(live.width + 4 + x, y, c) = restored.at(x, y, c);
      }
  return out;
}

}  // namespace sitl
