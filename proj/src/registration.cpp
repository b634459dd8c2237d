#include "sitl/registration.hpp"

#include "sitl/error.hpp"
#include "sitl/parallel.hpp"
#include "sitl/rng.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace sitl {

namespace {

// --- pyramid -----------------------------------------------------------------

struct Level {
  int width = 0, height = 0;
  double scale = 1.0;          // level coords * scale = base coords
  std::vector<float> lum;      // blurred luminance
  std::vector<float> smooth;   // 9x9 box mean for descriptor sampling

  float at(int x, int y) const {
    return lum[static_cast<std::size_t>(y) * width + x];
  }
  float smooth_at(int x, int y) const {
    return smooth[static_cast<std::size_t>(y) * width + x];
  }
};

// separable binomial blur [1 4 6 4 1]/16, edge-clamped
std::vector<float> blur5(const std::vector<float>& in, int w, int h) {
  std::vector<float> tmp(in.size()), out(in.size());
  constexpr float k[5] = {1.f / 16, 4.f / 16, 6.f / 16, 4.f / 16, 1.f / 16};
  parallel_for(h, [&](std::int64_t y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      for (int i = -2; i <= 2; ++i)
        acc += k[i + 2] * in[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  });
  parallel_for(h, [&](std::int64_t y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      for (int i = -2; i <= 2; ++i)
        acc += k[i + 2] * tmp[static_cast<std::size_t>(std::clamp<int>(
                                  static_cast<int>(y) + i, 0, h - 1)) * w + x];
      out[y * w + x] = acc;
    }
  });
  return out;
}

std::vector<float> box9(const std::vector<float>& in, int w, int h) {
  std::vector<float> tmp(in.size()), out(in.size());
  constexpr float inv = 1.f / 9.f;
  parallel_for(h, [&](std::int64_t y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      for (int i = -4; i <= 4; ++i) acc += in[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = acc * inv;
    }
  });
  parallel_for(h, [&](std::int64_t y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      for (int i = -4; i <= 4; ++i)
        acc += tmp[static_cast<std::size_t>(std::clamp<int>(
                       static_cast<int>(y) + i, 0, h - 1)) * w + x];
      out[y * w + x] = acc * inv;
    }
  });
  return out;
}

std::vector<Level> build_pyramid(const ImageBuffer& img, int levels,
                                 double factor) {
  std::vector<Level> pyr;
  std::vector<float> lum = to_luminance(img);
  int w = img.width, h = img.height;
  double scale = 1.0;
  for (int l = 0; l < levels && w >= 64 && h >= 64; ++l) {
    Level lev;
    lev.width = w;
    lev.height = h;
    lev.scale = scale;
    lev.lum = blur5(lum, w, h);
    lev.smooth = box9(lev.lum, w, h);
    pyr.push_back(std::move(lev));

    // bilinear downsample; pixel (x, y) of the next level samples (xf, yf)
    const int nw = static_cast<int>(w / factor);
    const int nh = static_cast<int>(h / factor);
    if (nw < 64 || nh < 64) break;
    std::vector<float> next(static_cast<std::size_t>(nw) * nh);
    const std::vector<float>& cur = pyr.back().lum;  // pre-blurred source
    parallel_for(nh, [&](std::int64_t y) {
      for (int x = 0; x < nw; ++x) {
        const double sx = std::min(x * factor, w - 1.0);
        const double sy = std::min(y * factor, h - 1.0);
        const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double fx = sx - x0, fy = sy - y0;
        next[static_cast<std::size_t>(y) * nw + x] = static_cast<float>(
            (1 - fx) * (1 - fy) * cur[static_cast<std::size_t>(y0) * w + x0] +
            fx * (1 - fy) * cur[static_cast<std::size_t>(y0) * w + x1] +
            (1 - fx) * fy * cur[static_cast<std::size_t>(y1) * w + x0] +
            fx * fy * cur[static_cast<std::size_t>(y1) * w + x1]);
      }
    });
    lum = std::move(next);
    w = nw;
    h = nh;
    scale *= factor;
  }
  return pyr;
}

// --- detection -----------------------------------------------------------------

constexpr int kDescRadius = 13;
constexpr int kBorder = 20;  // covers rotated descriptor samples

// radius-3 ring for the FAST-style contrast gate
constexpr int kRing[8][2] = {{3, 0},  {2, 2},  {0, 3},  {-2, 2},
                             {-3, 0}, {-2, -2}, {0, -3}, {2, -2}};

struct Candidate {
  float x, y, response;
  int level;
};

void detect_level(const Level& lev, int level_index, const DetectorConfig& cfg,
                  std::vector<Candidate>& out) {
  const int w = lev.width, h = lev.height;
  std::vector<float> resp(static_cast<std::size_t>(w) * h, 0.f);
  parallel_for(h - 2, [&](std::int64_t yy) {
    const int y = static_cast<int>(yy) + 1;
    for (int x = 1; x < w - 1; ++x) {
      const float lxx = lev.at(x - 1, y) - 2 * lev.at(x, y) + lev.at(x + 1, y);
      const float lyy = lev.at(x, y - 1) - 2 * lev.at(x, y) + lev.at(x, y + 1);
      const float lxy = 0.25f * (lev.at(x + 1, y + 1) + lev.at(x - 1, y - 1) -
                                 lev.at(x + 1, y - 1) - lev.at(x - 1, y + 1));
      resp[static_cast<std::size_t>(y) * w + x] = std::abs(lxx * lyy - lxy * lxy);
    }
  });

  // NMS + ring gate + subpixel; rows gathered in order for determinism
  std::vector<std::vector<Candidate>> rows(h);
  parallel_for(h, [&](std::int64_t yy) {
    const int y = static_cast<int>(yy);
    if (y < kBorder || y >= h - kBorder) return;
    for (int x = kBorder; x < w - kBorder; ++x) {
      const float r = resp[static_cast<std::size_t>(y) * w + x];
      if (r < cfg.response_floor) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (resp[static_cast<std::size_t>(y + dy) * w + (x + dx)] >= r) {
            is_max = false;
            break;
          }
        }
      if (!is_max) continue;

      const float center = lev.at(x, y);
      int diff = 0;
      for (const auto& o : kRing)
        if (std::abs(lev.at(x + o[0], y + o[1]) - center) > cfg.ring_contrast)
          ++diff;
      if (diff < cfg.ring_min_diff) continue;

      auto refine = [&](float rm, float r0, float rp) {
        const float den = rm - 2 * r0 + rp;
        if (std::abs(den) < 1e-12f) return 0.f;
        return std::clamp(0.5f * (rm - rp) / den, -0.5f, 0.5f);
      };
      const float dx = refine(resp[static_cast<std::size_t>(y) * w + x - 1], r,
                              resp[static_cast<std::size_t>(y) * w + x + 1]);
      const float dy = refine(resp[static_cast<std::size_t>(y - 1) * w + x], r,
                              resp[static_cast<std::size_t>(y + 1) * w + x]);
      rows[y].push_back({x + dx, y + dy, r, level_index});
    }
  });
  for (auto& row : rows)
    out.insert(out.end(), row.begin(), row.end());
}

// deterministic 256-pair sampling table within +-kDescRadius
struct PairTable {
  std::array<std::int8_t, 256 * 4> v{};
  PairTable() {
    Rng rng(0x5EEDBEEF);
    int filled = 0;
    while (filled < 256) {
      std::int8_t c[4];
      bool ok = true;
      for (int j = 0; j < 4; j += 2) {
        const int x = static_cast<int>(rng.uniform_index(2 * kDescRadius + 1)) -
                      kDescRadius;
        const int y = static_cast<int>(rng.uniform_index(2 * kDescRadius + 1)) -
                      kDescRadius;
        if (x * x + y * y > kDescRadius * kDescRadius) {
          ok = false;
          break;
        }
        c[j] = static_cast<std::int8_t>(x);
        c[j + 1] = static_cast<std::int8_t>(y);
      }
      if (!ok || (c[0] == c[2] && c[1] == c[3])) continue;
      for (int j = 0; j < 4; ++j) v[filled * 4 + j] = c[j];
      ++filled;
    }
  }
};

const PairTable& pair_table() {
  static const PairTable t;
  return t;
}

double orientation_of(const Level& lev, int cx, int cy) {
  // intensity centroid within a radius-9 disc
  double m01 = 0.0, m10 = 0.0;
  constexpr int R = 9;
  for (int dy = -R; dy <= R; ++dy)
    for (int dx = -R; dx <= R; ++dx) {
      if (dx * dx + dy * dy > R * R) continue;
      const double v = lev.at(cx + dx, cy + dy);
      m10 += dx * v;
      m01 += dy * v;
    }
  return std::atan2(m01, m10);
}

Descriptor describe(const Level& lev, int cx, int cy, double theta) {
  const PairTable& tab = pair_table();
  const double c = std::cos(theta), s = std::sin(theta);
  Descriptor d;
  for (int i = 0; i < 256; ++i) {
    const double ax = tab.v[i * 4 + 0], ay = tab.v[i * 4 + 1];
    const double bx = tab.v[i * 4 + 2], by = tab.v[i * 4 + 3];
    const int axr = cx + static_cast<int>(std::lround(c * ax - s * ay));
    const int ayr = cy + static_cast<int>(std::lround(s * ax + c * ay));
    const int bxr = cx + static_cast<int>(std::lround(c * bx - s * by));
    const int byr = cy + static_cast<int>(std::lround(s * bx + c * by));
    if (lev.smooth_at(axr, ayr) < lev.smooth_at(bxr, byr))
      d.bits[i >> 6] |= (1ull << (i & 63));
  }
  return d;
}

}  // namespace

FeatureSet detect_and_describe(const ImageBuffer& img, const DetectorConfig& cfg) {
  if (img.width < 64 || img.height < 64)
    throw InvalidSpec("detection needs at least a 64x64 image");

  const std::vector<Level> pyr = build_pyramid(img, cfg.levels, cfg.scale_factor);
  std::vector<Candidate> cands;
  for (std::size_t l = 0; l < pyr.size(); ++l)
    detect_level(pyr[l], static_cast<int>(l), cfg, cands);

  // strongest first; ties broken by position for determinism
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.level != b.level) return a.level < b.level;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  // Per-level quota proportional to level area (coarse scales must survive
  // the cap for cross-scale matching), then a spatial round-robin over a
  // grid of buckets within each level.
  std::vector<std::size_t> keep;
  if (static_cast<int>(cands.size()) <= cfg.max_features) {
    keep.resize(cands.size());
    std::iota(keep.begin(), keep.end(), 0);
  } else {
    double total_area = 0.0;
    for (const auto& lev : pyr)
      total_area += static_cast<double>(lev.width) * lev.height;
    const int nb = cfg.grid_buckets;
    for (std::size_t l = 0; l < pyr.size(); ++l) {
      const double area = static_cast<double>(pyr[l].width) * pyr[l].height;
      const int quota = std::max(
          1, static_cast<int>(std::lround(cfg.max_features * area / total_area)));
      std::vector<std::vector<std::size_t>> buckets(
          static_cast<std::size_t>(nb) * nb);
      for (std::size_t i = 0; i < cands.size(); ++i) {
        if (cands[i].level != static_cast<int>(l)) continue;
        const int ix = std::clamp(
            static_cast<int>(cands[i].x / pyr[l].width * nb), 0, nb - 1);
        const int iy = std::clamp(
            static_cast<int>(cands[i].y / pyr[l].height * nb), 0, nb - 1);
        buckets[static_cast<std::size_t>(iy) * nb + ix].push_back(i);
      }
      std::vector<std::size_t> cursor(buckets.size(), 0);
      int taken = 0;
      while (taken < quota) {
        bool advanced = false;
        for (std::size_t b = 0; b < buckets.size() && taken < quota; ++b) {
          if (cursor[b] < buckets[b].size()) {
            keep.push_back(buckets[b][cursor[b]++]);
            ++taken;
            advanced = true;
          }
        }
        if (!advanced) break;
      }
    }
    std::sort(keep.begin(), keep.end());  // restore global response order
  }

  FeatureSet out;
  out.width = img.width;
  out.height = img.height;
  out.keypoints.resize(keep.size());
  out.descriptors.resize(keep.size());
  parallel_for(static_cast<std::int64_t>(keep.size()), [&](std::int64_t i) {
    const Candidate& c = cands[keep[i]];
    const Level& lev = pyr[c.level];
    const int cx = static_cast<int>(std::lround(c.x));
    const int cy = static_cast<int>(std::lround(c.y));
    const double theta = orientation_of(lev, cx, cy);
    Keypoint kp;
    kp.position = Vec2(c.x * lev.scale, c.y * lev.scale);
    kp.scale = lev.scale;
    kp.orientation = theta;
    kp.response = c.response;
    kp.level = c.level;
    out.keypoints[i] = kp;
    out.descriptors[i] = describe(lev, cx, cy, theta);
  });

  if (out.size() < 8)
    throw TooFewFeatures("only " + std::to_string(out.size()) + " keypoints");
  return out;
}

// --- matching ------------------------------------------------------------------

namespace {

struct NnRow {
  int best = -1;
  int d1 = 1 << 30;
  int d2 = 1 << 30;
};

template <typename Loop>
std::vector<NnRow> nearest_rows(const FeatureSet& from, const FeatureSet& to,
                                const Loop& loop) {
  std::vector<NnRow> rows(from.size());
  loop(static_cast<std::int64_t>(from.size()), [&](std::int64_t i) {
    NnRow r;
    const Descriptor& d = from.descriptors[i];
    for (std::size_t j = 0; j < to.size(); ++j) {
      const int dist = d.hamming(to.descriptors[j]);
      if (dist < r.d1) {
        r.d2 = r.d1;
        r.d1 = dist;
        r.best = static_cast<int>(j);
      } else if (dist < r.d2) {
        r.d2 = dist;
      }
    }
    rows[i] = r;
  });
  return rows;
}

template <typename Loop>
MatchSet match_impl(const FeatureSet& a, const FeatureSet& b, double ratio,
                    const Loop& loop) {
  if (a.size() == 0 || b.size() == 0) throw NoMatches("empty feature set");
  const auto fwd = nearest_rows(a, b, loop);
  const auto bwd = nearest_rows(b, a, loop);

  auto passes_ratio = [&](const NnRow& r) {
    if (r.d2 >= (1 << 30)) return true;  // single candidate
    return static_cast<double>(r.d1) < ratio * static_cast<double>(r.d2);
  };

  MatchSet out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const NnRow& f = fwd[i];
    if (f.best < 0) continue;
    const NnRow& r = bwd[f.best];
    if (r.best != static_cast<int>(i)) continue;  // cross-check
    if (!passes_ratio(f) || !passes_ratio(r)) continue;
    out.matches.push_back({static_cast<int>(i), f.best, f.d1});
  }
  if (out.matches.empty()) throw NoMatches("no pairs survived filtering");
  return out;
}

}  // namespace

MatchSet match(const FeatureSet& a, const FeatureSet& b, double ratio) {
  return match_impl(a, b, ratio,
                    [](std::int64_t n, auto&& fn) { parallel_for(n, fn); });
}

MatchSet match_serial(const FeatureSet& a, const FeatureSet& b, double ratio) {
  return match_impl(a, b, ratio,
                    [](std::int64_t n, auto&& fn) { serial_for(n, fn); });
}

// --- homography estimation -------------------------------------------------------

namespace {

struct Normalizer {
  Mat3 t = Mat3::Identity();
  std::vector<Vec2> pts;
};

// Hartley normalization: centroid to origin, mean distance sqrt(2)
Normalizer normalize_points(const std::vector<Vec2>& in) {
  Normalizer n;
  Vec2 c = Vec2::Zero();
  for (const auto& p : in) c += p;
  c /= static_cast<double>(in.size());
  double mean_dist = 0.0;
  for (const auto& p : in) mean_dist += (p - c).norm();
  mean_dist /= static_cast<double>(in.size());
  const double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  n.t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  n.pts.reserve(in.size());
  for (const auto& p : in)
    n.pts.emplace_back(s * (p.x() - c.x()), s * (p.y() - c.y()));
  return n;
}

bool collinear(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double area =
      (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
  return std::abs(area) < 1e-6;
}

double transfer_error(const Mat3& h, const Vec2& src, const Vec2& dst) {
  const Vec3 q = h * Vec3(src.x(), src.y(), 1.0);
  if (std::abs(q.z()) < 1e-12) return 1e12;
  return (Vec2(q.x() / q.z(), q.y() / q.z()) - dst).norm();
}

// Gauss-Newton on the geometric transfer error over the 8 free parameters
// (h22 pinned at 1); the DLT minimizes only the algebraic error, so a couple
// of these steps buy a noticeable accuracy margin on noisy correspondences.
Mat3 polish_homography_gn(Mat3 h, const std::vector<Vec2>& src,
                          const std::vector<Vec2>& dst, int iters) {
  const std::size_t n = src.size();
  if (n < 8 || std::abs(h(2, 2)) < 1e-12) return h;
  h /= h(2, 2);
  auto residuals = [&](const Mat3& m, Eigen::VectorXd& r) {
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 q = m * Vec3(src[i].x(), src[i].y(), 1.0);
      if (std::abs(q.z()) < 1e-12) return false;
      r(2 * i) = q.x() / q.z() - dst[i].x();
      r(2 * i + 1) = q.y() / q.z() - dst[i].y();
    }
    return true;
  };
  Eigen::VectorXd r(2 * n), rp(2 * n), rm(2 * n);
  if (!residuals(h, r)) return h;
  double cost = r.squaredNorm();
  const int map[8][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 0},
                         {1, 1}, {1, 2}, {2, 0}, {2, 1}};
  for (int it = 0; it < iters; ++it) {
    Eigen::MatrixXd jac(2 * n, 8);
    bool ok = true;
    for (int p = 0; p < 8 && ok; ++p) {
      const double step = std::max(1e-9, 1e-7 * std::abs(h(map[p][0], map[p][1])));
      Mat3 hp = h, hm = h;
      hp(map[p][0], map[p][1]) += step;
      hm(map[p][0], map[p][1]) -= step;
      ok = residuals(hp, rp) && residuals(hm, rm);
      if (ok) jac.col(p) = (rp - rm) / (2 * step);
    }
    if (!ok) break;
    const Eigen::Matrix<double, 8, 8> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 8, 1> g = jac.transpose() * r;
    const Eigen::Matrix<double, 8, 1> delta =
        (jtj + 1e-9 * Eigen::Matrix<double, 8, 8>::Identity()).ldlt().solve(g);
    Mat3 trial = h;
    for (int p = 0; p < 8; ++p) trial(map[p][0], map[p][1]) -= delta(p);
    if (!residuals(trial, rp)) break;
    const double trial_cost = rp.squaredNorm();
    if (trial_cost >= cost) break;
    h = trial;
    r = rp;
    cost = trial_cost;
  }
  return h;
}

}  // namespace

Mat3 dlt_homography(const std::vector<Vec2>& src_pts,
                    const std::vector<Vec2>& dst_pts) {
  const std::size_t n = src_pts.size();
  if (n < 4 || dst_pts.size() != n)
    throw EstimationFailed("DLT needs >= 4 correspondences");
  const Normalizer ns = normalize_points(src_pts);
  const Normalizer nd = normalize_points(dst_pts);

  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ns.pts[i].x(), y = ns.pts[i].y();
    const double u = nd.pts[i].x(), v = nd.pts[i].y();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return nd.t.inverse() * hn * ns.t;
}

Homography estimate_homography(const std::vector<Vec2>& src_pts,
                               const std::vector<Vec2>& dst_pts,
                               const RansacConfig& cfg,
                               const std::string& src_tag,
                               const std::string& dst_tag) {
  const std::size_t n = src_pts.size();
  if (n < 4 || dst_pts.size() != n)
    throw EstimationFailed("need >= 4 matches, got " + std::to_string(n));

  Rng rng(cfg.seed);
  std::vector<char> best_inliers(n, 0), inliers(n, 0);
  int best_count = 0;
  int iterations_needed = cfg.max_iterations;

  for (int it = 0; it < iterations_needed; ++it) {
    std::size_t idx[4];
    bool ok = true;
    for (int k = 0; k < 4; ++k) {
      idx[k] = rng.uniform_index(n);
      for (int j = 0; j < k; ++j)
        if (idx[j] == idx[k]) ok = false;
    }
    if (!ok) continue;
    ok = !collinear(src_pts[idx[0]], src_pts[idx[1]], src_pts[idx[2]]) &&
         !collinear(src_pts[idx[0]], src_pts[idx[1]], src_pts[idx[3]]) &&
         !collinear(src_pts[idx[0]], src_pts[idx[2]], src_pts[idx[3]]) &&
         !collinear(src_pts[idx[1]], src_pts[idx[2]], src_pts[idx[3]]) &&
         !collinear(dst_pts[idx[0]], dst_pts[idx[1]], dst_pts[idx[2]]) &&
         !collinear(dst_pts[idx[0]], dst_pts[idx[1]], dst_pts[idx[3]]) &&
         !collinear(dst_pts[idx[0]], dst_pts[idx[2]], dst_pts[idx[3]]) &&
         !collinear(dst_pts[idx[1]], dst_pts[idx[2]], dst_pts[idx[3]]);
    if (!ok) continue;

    Mat3 h;
    try {
      h = dlt_homography({src_pts[idx[0]], src_pts[idx[1]], src_pts[idx[2]],
                          src_pts[idx[3]]},
                         {dst_pts[idx[0]], dst_pts[idx[1]], dst_pts[idx[2]],
                          dst_pts[idx[3]]});
    } catch (const Error&) {
      continue;
    }
    if (std::abs(h.determinant()) < 1e-12) continue;

    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      inliers[i] =
          transfer_error(h, src_pts[i], dst_pts[i]) < cfg.inlier_threshold_px;
      count += inliers[i];
    }
    if (count > best_count) {
      best_count = count;
      best_inliers = inliers;
      // adaptive iteration bound at the configured confidence; clamp in
      // double before the int cast (the bound can exceed 1e10 early on)
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double p_outlier = 1.0 - w * w * w * w;
      if (p_outlier < 1e-12) {
        iterations_needed = it + 1;
      } else {
        const double need =
            std::ceil(std::log(1.0 - cfg.confidence) / std::log(p_outlier));
        const int need_i = need >= static_cast<double>(cfg.max_iterations)
                               ? cfg.max_iterations
                               : static_cast<int>(need);
        iterations_needed =
            std::min(cfg.max_iterations, std::max(it + 1, need_i));
      }
    }
  }

  if (best_count < std::max(4, cfg.min_inliers))
    throw EstimationFailed("best hypothesis has " + std::to_string(best_count) +
                           " inliers");

  // re-fit on all inliers, recount with the refined model, once more
  Mat3 refined;
  for (int round = 0; round < 2; ++round) {
    std::vector<Vec2> s, d;
    for (std::size_t i = 0; i < n; ++i)
      if (best_inliers[i]) {
        s.push_back(src_pts[i]);
        d.push_back(dst_pts[i]);
      }
    refined = dlt_homography(s, d);
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      best_inliers[i] = transfer_error(refined, src_pts[i], dst_pts[i]) <
                        cfg.inlier_threshold_px;
      count += best_inliers[i];
    }
    best_count = count;
    if (best_count < std::max(4, cfg.min_inliers))
      throw EstimationFailed("inlier support collapsed on re-fit");
  }

  Homography out;
  out.h = normalize_homography(refined);
  out.src_frame = src_tag;
  out.dst_frame = dst_tag;
  out.inlier_count = best_count;
  out.inlier_ratio = static_cast<double>(best_count) / static_cast<double>(n);
  return out;
}

Homography estimate_homography(const FeatureSet& a, const FeatureSet& b,
                               const MatchSet& m, const RansacConfig& cfg) {
  std::vector<Vec2> src, dst;
  src.reserve(m.matches.size());
  dst.reserve(m.matches.size());
  for (const auto& match : m.matches) {
    src.push_back(a.keypoints[match.src_index].position);
    dst.push_back(b.keypoints[match.dst_index].position);
  }
  return estimate_homography(src, dst, cfg, m.src_id, m.dst_id);
}

Homography refine_homography_guided(const FeatureSet& a, const FeatureSet& b,
                                    const Homography& initial,
                                    double radius_px, int max_distance) {
  std::vector<int> partner(a.size(), -1);
  parallel_for(static_cast<std::int64_t>(a.size()), [&](std::int64_t i) {
    const Vec2 mapped = initial.apply(a.keypoints[i].position);
    if (mapped.x() < -50 || mapped.y() < -50 || mapped.x() > b.width + 50 ||
        mapped.y() > b.height + 50)
      return;
    int best = max_distance + 1, best_j = -1;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if ((b.keypoints[j].position - mapped).squaredNorm() >
          radius_px * radius_px)
        continue;
      const int d = a.descriptors[i].hamming(b.descriptors[j]);
      if (d < best) {
        best = d;
        best_j = static_cast<int>(j);
      }
    }
    partner[i] = best_j;
  });

  std::vector<Vec2> src, dst;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (partner[i] < 0) continue;
    src.push_back(a.keypoints[i].position);
    dst.push_back(b.keypoints[partner[i]].position);
  }
  if (src.size() < 12) return initial;  // keep the coarse estimate

  // reweighted DLT passes with a tightening inlier band, then a geometric
  // polish on the final inlier set
  Mat3 h = initial.h;
  int inliers = 0;
  for (const double band : {radius_px, 1.5}) {
    std::vector<Vec2> s, d;
    for (std::size_t i = 0; i < src.size(); ++i)
      if (transfer_error(h, src[i], dst[i]) < band) {
        s.push_back(src[i]);
        d.push_back(dst[i]);
      }
    if (s.size() < 12) break;
    h = dlt_homography(s, d);
    h = polish_homography_gn(h, s, d, 4);
    inliers = static_cast<int>(s.size());
  }

  Homography out = initial;
  out.h = normalize_homography(h);
  out.inlier_count = inliers > 0 ? inliers : initial.inlier_count;
  out.inlier_ratio =
      src.empty() ? initial.inlier_ratio
                  : static_cast<double>(out.inlier_count) /
                        static_cast<double>(src.size());
  return out;
}

void dump_matches_json(const std::filesystem::path& file, const FeatureSet& a,
                       const FeatureSet& b, const MatchSet& m,
                       const Homography& h) {
  nlohmann::ordered_json j;
  j["src"] = m.src_id;
  j["dst"] = m.dst_id;
  j["inlier_count"] = h.inlier_count;
  j["inlier_ratio"] = h.inlier_ratio;
  j["matches"] = nlohmann::ordered_json::array();
  for (const auto& match : m.matches) {
    const Vec2& s = a.keypoints[match.src_index].position;
    const Vec2& d = b.keypoints[match.dst_index].position;
    const Vec2 mapped = h.apply(s);
    j["matches"].push_back({{"src", {s.x(), s.y()}},
                            {"dst", {d.x(), d.y()}},
                            {"distance", match.distance},
                            {"inlier", (mapped - d).norm() < 3.0}});
  }
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << j.dump(2) << "\n";
}

}  // namespace sitl
