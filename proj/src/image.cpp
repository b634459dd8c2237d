#include "sitl/image.hpp"

#include "sitl/error.hpp"
#include "sitl/parallel.hpp"
#include "sitl/rng.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace sitl {

namespace {

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
}

}  // namespace

ImageBuffer::ImageBuffer(int w, int h, std::uint8_t fill) : width(w), height(h) {
  if (w < 1 || h < 1) throw InvalidSpec("image dimensions must be >= 1");
  data.assign(static_cast<std::size_t>(w) * h * 3, fill);
}

Vec3 ImageBuffer::sample(double x, double y) const {
  if (x < 0.0 || y < 0.0 || x > width - 1.0 || y > height - 1.0)
    return Vec3::Zero();
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = x - x0, fy = y - y0;
  Vec3 out;
  for (int c = 0; c < 3; ++c) {
    const double v00 = at(x0, y0, c), v10 = at(x1, y0, c);
    const double v01 = at(x0, y1, c), v11 = at(x1, y1, c);
    out[c] = (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 +
             (1 - fx) * fy * v01 + fx * fy * v11;
  }
  return out;
}

double mean_abs_error(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_size(b)) throw InvalidSpec("size mismatch in mean_abs_error");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    sum += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
  return sum / static_cast<double>(a.data.size());
}

double mean_abs_error(const ImageBuffer& a, const ImageBuffer& b,
                      const std::vector<std::uint8_t>& mask) {
  if (!a.same_size(b)) throw InvalidSpec("size mismatch in mean_abs_error");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < 3; ++c)
      sum += std::abs(static_cast<double>(a.data[p * 3 + c]) - b.data[p * 3 + c]);
    n += 3;
  }
  if (n == 0) throw InvalidSpec("empty mask in mean_abs_error");
  return sum / static_cast<double>(n);
}

std::vector<float> to_luminance(const ImageBuffer& img) {
  std::vector<float> lum(static_cast<std::size_t>(img.width) * img.height);
  parallel_for(img.height, [&](std::int64_t y) {
    const std::uint8_t* row = &img.data[static_cast<std::size_t>(y) * img.width * 3];
    float* out = &lum[static_cast<std::size_t>(y) * img.width];
    for (int x = 0; x < img.width; ++x) {
      out[x] = 0.299f * row[3 * x] + 0.587f * row[3 * x + 1] +
               0.114f * row[3 * x + 2];
    }
  });
  return lum;
}

double luminance_ncc(const ImageBuffer& a, const ImageBuffer& b, int stride) {
  if (!a.same_size(b)) throw InvalidSpec("size mismatch in luminance_ncc");
  const std::vector<float> la = to_luminance(a);
  const std::vector<float> lb = to_luminance(b);
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  long n = 0;
  for (std::size_t i = 0; i < la.size(); i += stride) {
    sa += la[i];
    sb += lb[i];
    saa += static_cast<double>(la[i]) * la[i];
    sbb += static_cast<double>(lb[i]) * lb[i];
    sab += static_cast<double>(la[i]) * lb[i];
    ++n;
  }
  const double ma = sa / n, mb = sb / n;
  const double va = saa / n - ma * ma;
  const double vb = sbb / n - mb * mb;
  if (va < 1e-9 || vb < 1e-9) return 0.0;
  return (sab / n - ma * mb) / std::sqrt(va * vb);
}

Homography Homography::inverse() const {
  Homography out;
  out.h = normalize_homography(h.inverse());
  out.src_frame = dst_frame;
  out.dst_frame = src_frame;
  out.inlier_count = inlier_count;
  out.inlier_ratio = inlier_ratio;
  return out;
}

Mat3 normalize_homography(const Mat3& h) {
  if (std::abs(h.determinant()) <= 1e-12)
    throw SingularHomography("determinant below 1e-12");
  if (std::abs(h(2, 2)) < 1e-12) return h;  // leave projectively normalized
  return h / h(2, 2);
}

namespace {

template <typename Loop>
ImageBuffer warp_impl(const ImageBuffer& src, const Homography& hom, int out_w,
                      int out_h, const Loop& loop) {
  if (std::abs(hom.h.determinant()) <= 1e-12)
    throw SingularHomography("cannot warp through a singular homography");
  const Mat3 hinv = hom.h.inverse();
  ImageBuffer out(out_w, out_h);
  loop(out_h, [&](std::int64_t y) {
    for (int x = 0; x < out_w; ++x) {
      const Vec3 q = hinv * Vec3(x, y, 1.0);
      if (std::abs(q.z()) < 1e-12) continue;
      const Vec3 v = src.sample(q.x() / q.z(), q.y() / q.z());
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = clamp_u8(v[c]);
    }
  });
  return out;
}

}  // namespace

ImageBuffer warp_homography(const ImageBuffer& src, const Homography& h,
                            int out_w, int out_h) {
  return warp_impl(src, h, out_w, out_h,
                   [](std::int64_t n, auto&& fn) { parallel_for(n, fn); });
}

ImageBuffer warp_homography_serial(const ImageBuffer& src, const Homography& h,
                                   int out_w, int out_h) {
  return warp_impl(src, h, out_w, out_h,
                   [](std::int64_t n, auto&& fn) { serial_for(n, fn); });
}

ImageBuffer inject_occlusion(const ImageBuffer& img, const OcclusionSpec& spec,
                             std::uint64_t seed) {
  if (spec.polygon.size() < 3)
    throw InvalidSpec("occlusion polygon needs >= 3 vertices");
  // shoelace area; also rejects collapsed polygons
  double area = 0.0;
  const std::size_t n = spec.polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = spec.polygon[i];
    const Vec2& b = spec.polygon[(i + 1) % n];
    area += a.x() * b.y() - b.x() * a.y();
  }
  if (std::abs(area) * 0.5 <= 0.0)
    throw InvalidSpec("occlusion polygon has zero area");
  const double orient = area > 0 ? 1.0 : -1.0;

  ImageBuffer out = img;
  Rng rng(seed);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      bool inside = true;
      for (std::size_t i = 0; i < n && inside; ++i) {
        const Vec2& a = spec.polygon[i];
        const Vec2& b = spec.polygon[(i + 1) % n];
        const double cross =
            (b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x());
        inside = orient * cross >= 0.0;
      }
      if (!inside) continue;
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) = spec.noise_fill
                              ? static_cast<std::uint8_t>(rng.uniform_index(256))
                              : spec.fill_rgb[c];
    }
  }
  return out;
}

ImageBuffer inject_specular(const ImageBuffer& img, const Vec2& center,
                            double radius, double gain) {
  if (radius <= 0.0 || gain < 0.0) throw InvalidSpec("bad specular parameters");
  ImageBuffer out = img;
  const double sigma = radius * 0.5;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  parallel_for(img.height, [&](std::int64_t y) {
    for (int x = 0; x < img.width; ++x) {
      const double r2 = (x - center.x()) * (x - center.x()) +
                        (y - center.y()) * (y - center.y());
      const double add = 255.0 * gain * std::exp(-r2 * inv2s2);
      if (add < 0.5) continue;
      for (int c = 0; c < 3; ++c)
        out.at(x, static_cast<int>(y), c) =
            clamp_u8(img.at(x, static_cast<int>(y), c) + add);
    }
  });
  return out;
}

ImageBuffer inject_gamma(const ImageBuffer& img, double gamma) {
  if (gamma <= 0.0) throw InvalidSpec("gamma must be > 0");
  std::uint8_t lut[256];
  for (int i = 0; i < 256; ++i)
    lut[i] = clamp_u8(255.0 * std::pow(i / 255.0, gamma));
  ImageBuffer out = img;
  for (auto& v : out.data) v = lut[v];
  return out;
}

ImageBuffer inject_gaussian_noise(const ImageBuffer& img, double sigma,
                                  std::uint64_t seed) {
  if (sigma < 0.0) throw InvalidSpec("sigma must be >= 0");
  ImageBuffer out = img;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (auto& v : out.data) v = clamp_u8(v + rng.normal(0.0, sigma));
  return out;
}

ImageBuffer inject_pixel_shift(const ImageBuffer& img, double dx, double dy) {
  Homography t;
  t.h << 1, 0, dx, 0, 1, dy, 0, 0, 1;
  t.src_frame = "unshifted";
  t.dst_frame = "shifted";
  return warp_homography(img, t, img.width, img.height);
}

// --- pattern -------------------------------------------------------------------

namespace {

// Jittered-grid Voronoi octave: each grid cell owns one seed site and a
// color; a pixel blends the colors of the nearest and second-nearest sites
// across a ~1.5 px soft boundary, so cell edges stay bilinear-friendly.
struct CellOctave {
  int cell = 1;
  int gw = 0, gh = 0;
  std::vector<float> sx, sy;
  std::vector<std::uint8_t> rgb;

  CellOctave(int width, int height, int cell_px, std::uint64_t seed)
      : cell(cell_px) {
    gw = (width + cell - 1) / cell;
    gh = (height + cell - 1) / cell;
    const std::size_t n = static_cast<std::size_t>(gw) * gh;
    sx.resize(n);
    sy.resize(n);
    rgb.resize(n * 3);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
      sx[i] = static_cast<float>(rng.uniform());
      sy[i] = static_cast<float>(rng.uniform());
      for (int c = 0; c < 3; ++c)
        rgb[i * 3 + c] = static_cast<std::uint8_t>(16 + rng.uniform_index(224));
    }
  }

  void color_at(int x, int y, float out[3]) const {
    const int cx = x / cell, cy = y / cell;
    float best = 1e30f, second = 1e30f;
    std::size_t best_i = 0, second_i = 0;
    for (int gy = std::max(0, cy - 1); gy <= std::min(gh - 1, cy + 1); ++gy) {
      for (int gx = std::max(0, cx - 1); gx <= std::min(gw - 1, cx + 1); ++gx) {
        const std::size_t i = static_cast<std::size_t>(gy) * gw + gx;
        const float px = (gx + sx[i]) * cell;
        const float py = (gy + sy[i]) * cell;
        const float d = (px - x) * (px - x) + (py - y) * (py - y);
        if (d < best) {
          second = best;
          second_i = best_i;
          best = d;
          best_i = i;
        } else if (d < second) {
          second = d;
          second_i = i;
        }
      }
    }
    // signed distance to the cell boundary ~ (d2 - d1) / (2 * edge gap);
    // a fixed 1.5 px transition band is enough to tame aliasing
    float w = 1.0f;
    if (second < 1e29f) {
      const float margin = (std::sqrt(second) - std::sqrt(best)) / 1.5f;
      w = margin >= 1.0f ? 1.0f : 0.5f + 0.5f * margin;
    }
    for (int c = 0; c < 3; ++c)
      out[c] = w * rgb[best_i * 3 + c] + (1.0f - w) * rgb[second_i * 3 + c];
  }
};

template <typename Loop>
ImageBuffer pattern_impl(int width, int height, std::uint64_t seed,
                         const Loop& loop) {
  const CellOctave fine(width, height, 14, seed);
  const CellOctave coarse(width, height, 110, seed ^ 0xA5A5A5A5ull);
  ImageBuffer out(width, height);
  loop(height, [&](std::int64_t y) {
    float f[3], c[3];
    for (int x = 0; x < width; ++x) {
      fine.color_at(x, static_cast<int>(y), f);
      coarse.color_at(x, static_cast<int>(y), c);
      // multiplicative blend keeps both octaves visible to the detector
      for (int ch = 0; ch < 3; ++ch) {
        const double v = (0.25 + 0.75 * c[ch] / 255.0) * f[ch];
        out.at(x, static_cast<int>(y), ch) = clamp_u8(v);
      }
    }
  });
  return out;
}

}  // namespace

ImageBuffer generate_pattern(int width, int height, std::uint64_t seed) {
  return pattern_impl(width, height, seed,
                      [](std::int64_t n, auto&& fn) { parallel_for(n, fn); });
}

ImageBuffer generate_pattern_serial(int width, int height, std::uint64_t seed) {
  return pattern_impl(width, height, seed,
                      [](std::int64_t n, auto&& fn) { serial_for(n, fn); });
}

}  // namespace sitl
