#pragma once

#include "sitl/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sitl {

/// Row-major 8-bit RGB raster. Immutable by convention after construction:
/// every operation returns a new buffer.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  static constexpr int channels = 3;
  std::vector<std::uint8_t> data;  // width*height*3

  ImageBuffer() = default;
  ImageBuffer(int w, int h, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool same_size(const ImageBuffer& o) const {
    return width == o.width && height == o.height;
  }

  /// Bilinear sample at continuous coords (integer = pixel center).
  /// Out-of-bounds returns black.
  Vec3 sample(double x, double y) const;
};

/// Mean absolute difference over all channels; images must be same size.
double mean_abs_error(const ImageBuffer& a, const ImageBuffer& b);
/// Same, restricted to pixels where `mask` is true (one flag per pixel).
double mean_abs_error(const ImageBuffer& a, const ImageBuffer& b,
                      const std::vector<std::uint8_t>& mask);

/// ITU-R 601 luminance as float plane in [0, 255].
std::vector<float> to_luminance(const ImageBuffer& img);

/// Pearson correlation of the two luminance planes (stride-subsampled).
/// Robust verification signal: monotone lighting changes keep it high,
/// misregistered texture drives it to zero.
double luminance_ncc(const ImageBuffer& a, const ImageBuffer& b,
                     int stride = 2);

// --- homography warp ---------------------------------------------------------

/// 3x3 projective map between tagged pixel frames, normalized h(2,2) = 1 when
/// representable. Produced by registration or by simcam::plane_homography.
struct Homography {
  Mat3 h = Mat3::Identity();
  std::string src_frame = "src";
  std::string dst_frame = "dst";
  int inlier_count = 0;
  double inlier_ratio = 0.0;

  /// Apply to a pixel of the src frame, returning dst-frame coords.
  Vec2 apply(const Vec2& p) const {
    Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
    return {q.x() / q.z(), q.y() / q.z()};
  }
  Homography inverse() const;
};

/// Normalize so h(2,2) = 1; throws SingularHomography if |det| <= 1e-12.
Mat3 normalize_homography(const Mat3& h);

/// Output pixel p takes the bilinearly interpolated src value at h^-1 * p;
/// source lookups outside src are black.
ImageBuffer warp_homography(const ImageBuffer& src, const Homography& h,
                            int out_w, int out_h);
ImageBuffer warp_homography_serial(const ImageBuffer& src, const Homography& h,
                                   int out_w, int out_h);

// --- perturbation injectors ---------------------------------------------------

struct OcclusionSpec {
  std::vector<Vec2> polygon;  // convex, pixel coords
  std::uint8_t fill_rgb[3] = {40, 40, 40};
  bool noise_fill = false;  // fill with uniform noise instead of a constant
};

ImageBuffer inject_occlusion(const ImageBuffer& img, const OcclusionSpec& spec,
                             std::uint64_t seed = 0);
/// Additive Gaussian bright blob centered at `center`, sigma = radius/2,
/// peak amplitude gain*255, clamped.
ImageBuffer inject_specular(const ImageBuffer& img, const Vec2& center,
                            double radius, double gain);
/// Per-channel power law out = 255*(in/255)^gamma; gamma must be > 0.
ImageBuffer inject_gamma(const ImageBuffer& img, double gamma);
/// I.i.d. clamped Gaussian intensity noise, deterministic given the seed.
ImageBuffer inject_gaussian_noise(const ImageBuffer& img, double sigma,
                                  std::uint64_t seed);
/// Coherent sub-pixel translation by (dx, dy) pixels (bilinear resample).
ImageBuffer inject_pixel_shift(const ImageBuffer& img, double dx, double dy);

// --- PNG I/O -------------------------------------------------------------------

void write_png(const std::filesystem::path& file, const ImageBuffer& img);
ImageBuffer read_png(const std::filesystem::path& file);

// --- reference workspace pattern ----------------------------------------------

/// Deterministic two-octave jittered-Voronoi RGB cell texture standing in for
/// the vendored workspace pattern. Same seed, same pixels, any thread count.
ImageBuffer generate_pattern(int width = 2000, int height = 2000,
                             std::uint64_t seed = 20240001ull);
ImageBuffer generate_pattern_serial(int width, int height, std::uint64_t seed);

}  // namespace sitl
