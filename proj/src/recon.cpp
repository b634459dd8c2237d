#include "sitl/recon.hpp"

#include "sitl/error.hpp"
#include "sitl/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

namespace sitl {

std::size_t VoxelVolume::occupied_count() const {
  std::size_t n = 0;
  for (const auto w : bits) n += std::popcount(w);
  return n;
}

std::vector<Vec3> VoxelVolume::occupied_centers() const {
  std::vector<Vec3> pts;
  pts.reserve(occupied_count());
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x)
        if (get(x, y, z))
          pts.push_back(origin + pitch * Vec3(x, y, z));
  return pts;
}

namespace {

struct Bounds {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());
  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
};

Vec3 plane_point(const SliceSet& s, const ImageBuffer& mask, int i, int j) {
  return {(i - (mask.width - 1) / 2.0) * s.pixel_pitch, j * s.pixel_pitch, 0.0};
}

template <typename Loop>
VoxelVolume compound_impl(const SliceSet& slices, double voxel_pitch,
                          const Loop& loop) {
  if (slices.masks.empty()) throw EmptyInput("no slices to compound");
  if (slices.masks.size() != slices.poses.size())
    throw InvalidSpec("mask/pose count mismatch");
  if (voxel_pitch <= 0 || slices.pixel_pitch <= 0)
    throw InvalidSpec("pitches must be > 0");
  const int w0 = slices.masks.front().width;
  const int h0 = slices.masks.front().height;
  for (const auto& m : slices.masks)
    if (m.width != w0 || m.height != h0)
      throw InvalidSpec("all slice masks must share dimensions");

  // conservative bounds from the slice rectangle corners
  Bounds b;
  for (std::size_t s = 0; s < slices.masks.size(); ++s) {
    const Pose world_from_plane = slices.poses[s] * slices.probe_from_plane;
    for (const int i : {0, w0 - 1})
      for (const int j : {0, h0 - 1})
        b.extend(world_from_plane.apply(plane_point(slices, slices.masks[s], i, j)));
  }
  VoxelVolume v;
  v.pitch = voxel_pitch;
  // snap to the world lattice so volumes of equal pitch align exactly
  const auto snap = [voxel_pitch](double x) {
    return std::floor(x / voxel_pitch - 1.0) * voxel_pitch;
  };
  v.origin = Vec3(snap(b.lo.x()), snap(b.lo.y()), snap(b.lo.z()));
  v.nx = static_cast<int>(std::ceil((b.hi.x() - v.origin.x()) / voxel_pitch)) + 2;
  v.ny = static_cast<int>(std::ceil((b.hi.y() - v.origin.y()) / voxel_pitch)) + 2;
  v.nz = static_cast<int>(std::ceil((b.hi.z() - v.origin.z()) / voxel_pitch)) + 2;
  const std::size_t words =
      (static_cast<std::size_t>(v.nx) * v.ny * v.nz + 63) / 64;

  // thread-local grids merged by OR: bit-exact for any schedule
  const int threads = max_threads();
  std::vector<std::vector<std::uint64_t>> partial(
      threads, std::vector<std::uint64_t>(words, 0));
  loop(static_cast<std::int64_t>(slices.masks.size()), [&](std::int64_t s) {
#ifdef SITL_WITH_OPENMP
    auto& grid = partial[omp_get_thread_num()];
#else
    auto& grid = partial[0];
#endif
    const ImageBuffer& mask = slices.masks[s];
    const Pose world_from_plane = slices.poses[s] * slices.probe_from_plane;
    for (int j = 0; j < h0; ++j)
      for (int i = 0; i < w0; ++i) {
        if (mask.at(i, j, 0) < 128) continue;
        const Vec3 p = world_from_plane.apply(plane_point(slices, mask, i, j));
        const int x = static_cast<int>(std::lround((p.x() - v.origin.x()) / voxel_pitch));
        const int y = static_cast<int>(std::lround((p.y() - v.origin.y()) / voxel_pitch));
        const int z = static_cast<int>(std::lround((p.z() - v.origin.z()) / voxel_pitch));
        if (x < 0 || y < 0 || z < 0 || x >= v.nx || y >= v.ny || z >= v.nz)
          continue;
        const std::size_t idx = v.index(x, y, z);
        grid[idx >> 6] |= (1ull << (idx & 63));
      }
  });
  v.bits.assign(words, 0);
  for (const auto& grid : partial)
    for (std::size_t i = 0; i < words; ++i) v.bits[i] |= grid[i];
  return v;
}

// --- exact nearest neighbor on voxel centers ------------------------------------

struct KdTree {
  struct Node {
    Vec3 point;
    int axis = 0;
    int left = -1, right = -1;
  };
  std::vector<Node> nodes;
  int root = -1;

  explicit KdTree(std::vector<Vec3> pts) {
    nodes.reserve(pts.size());
    root = build(pts, 0, static_cast<int>(pts.size()), 0);
  }

  int build(std::vector<Vec3>& pts, int lo, int hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const int mid = (lo + hi) / 2;
    std::nth_element(pts.begin() + lo, pts.begin() + mid, pts.begin() + hi,
                     [axis](const Vec3& a, const Vec3& b) {
                       return a[axis] < b[axis];
                     });
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({pts[mid], axis, -1, -1});
    const int l = build(pts, lo, mid, depth + 1);
    const int r = build(pts, mid + 1, hi, depth + 1);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }

  void nearest(int id, const Vec3& q, double& best2) const {
    if (id < 0) return;
    const Node& n = nodes[id];
    best2 = std::min(best2, (n.point - q).squaredNorm());
    const double plane_d = q[n.axis] - n.point[n.axis];
    const int first = plane_d < 0 ? n.left : n.right;
    const int second = plane_d < 0 ? n.right : n.left;
    nearest(first, q, best2);
    if (plane_d * plane_d < best2) nearest(second, q, best2);
  }

  double nearest_distance(const Vec3& q) const {
    double best2 = std::numeric_limits<double>::max();
    nearest(root, q, best2);
    return std::sqrt(best2);
  }
};

template <typename Loop>
VolumeMetrics metrics_impl(const VoxelVolume& a, const VoxelVolume& b,
                           const Loop& loop) {
  if (a.occupied_count() == 0 || b.occupied_count() == 0)
    throw EmptyVolume("volume metrics need non-empty volumes");
  if (std::abs(a.pitch - b.pitch) > 1e-12)
    throw PitchMismatch("voxel pitches differ");

  const std::vector<Vec3> pa = a.occupied_centers();
  const std::vector<Vec3> pb = b.occupied_centers();
  const KdTree ta(pa);
  const KdTree tb(pb);

  std::vector<double> da(pa.size()), db(pb.size());
  loop(static_cast<std::int64_t>(pa.size()),
       [&](std::int64_t i) { da[i] = tb.nearest_distance(pa[i]); });
  loop(static_cast<std::int64_t>(pb.size()),
       [&](std::int64_t i) { db[i] = ta.nearest_distance(pb[i]); });

  double sup_a = 0, sup_b = 0, mean_a = 0, mean_b = 0;
  for (const double d : da) {
    sup_a = std::max(sup_a, d);
    mean_a += d;
  }
  for (const double d : db) {
    sup_b = std::max(sup_b, d);
    mean_b += d;
  }
  mean_a /= static_cast<double>(da.size());
  mean_b /= static_cast<double>(db.size());

  VolumeMetrics m;
  m.hausdorff_mm = std::max(sup_a, sup_b) * 1000.0;
  m.chamfer_mm = 0.5 * (mean_a + mean_b) * 1000.0;

  // set overlap on the shared lattice (origins are pitch-snapped)
  const auto key_of = [&](const VoxelVolume& v, int x, int y, int z) {
    const auto gx = static_cast<std::int64_t>(
        std::llround(v.origin.x() / v.pitch)) + x;
    const auto gy = static_cast<std::int64_t>(
        std::llround(v.origin.y() / v.pitch)) + y;
    const auto gz = static_cast<std::int64_t>(
        std::llround(v.origin.z() / v.pitch)) + z;
    return (gx & 0x1FFFFF) | ((gy & 0x1FFFFF) << 21) | ((gz & 0x1FFFFF) << 42);
  };
  std::vector<std::int64_t> ka, kb;
  ka.reserve(pa.size());
  kb.reserve(pb.size());
  for (int z = 0; z < a.nz; ++z)
    for (int y = 0; y < a.ny; ++y)
      for (int x = 0; x < a.nx; ++x)
        if (a.get(x, y, z)) ka.push_back(key_of(a, x, y, z));
  for (int z = 0; z < b.nz; ++z)
    for (int y = 0; y < b.ny; ++y)
      for (int x = 0; x < b.nx; ++x)
        if (b.get(x, y, z)) kb.push_back(key_of(b, x, y, z));
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  std::vector<std::int64_t> inter;
  std::set_intersection(ka.begin(), ka.end(), kb.begin(), kb.end(),
                        std::back_inserter(inter));
  const double ni = static_cast<double>(inter.size());
  const double na = static_cast<double>(ka.size());
  const double nb = static_cast<double>(kb.size());
  m.dice = 2.0 * ni / (na + nb);
  m.jaccard = ni / (na + nb - ni);
  return m;
}

}  // namespace

VoxelVolume compound(const SliceSet& slices, double voxel_pitch) {
  return compound_impl(slices, voxel_pitch,
                       [](std::int64_t n, auto&& fn) { parallel_for(n, fn); });
}

VoxelVolume compound_serial(const SliceSet& slices, double voxel_pitch) {
  return compound_impl(slices, voxel_pitch,
                       [](std::int64_t n, auto&& fn) { serial_for(n, fn); });
}

VolumeMetrics volume_metrics(const VoxelVolume& a, const VoxelVolume& b) {
  return metrics_impl(a, b,
                      [](std::int64_t n, auto&& fn) { parallel_for(n, fn); });
}

VolumeMetrics volume_metrics_serial(const VoxelVolume& a, const VoxelVolume& b) {
  return metrics_impl(a, b,
                      [](std::int64_t n, auto&& fn) { serial_for(n, fn); });
}

void save_volume(const std::filesystem::path& file, const VoxelVolume& v) {
  nlohmann::ordered_json j;
  j["dims"] = {v.nx, v.ny, v.nz};
  j["origin_m"] = {v.origin.x(), v.origin.y(), v.origin.z()};
  j["pitch_m"] = v.pitch;
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << j.dump() << "\n";
  for (const std::uint64_t w : v.bits) {
    char bytes[8];
    for (int i = 0; i < 8; ++i)
      bytes[i] = static_cast<char>((w >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
  }
}

VoxelVolume load_volume(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::string header;
  std::getline(in, header);
  const auto j = nlohmann::ordered_json::parse(header);
  VoxelVolume v;
  v.nx = j.at("dims").at(0);
  v.ny = j.at("dims").at(1);
  v.nz = j.at("dims").at(2);
  v.origin = Vec3(j.at("origin_m").at(0), j.at("origin_m").at(1),
                  j.at("origin_m").at(2));
  v.pitch = j.at("pitch_m");
  const std::size_t words =
      (static_cast<std::size_t>(v.nx) * v.ny * v.nz + 63) / 64;
  v.bits.assign(words, 0);
  for (std::size_t i = 0; i < words; ++i) {
    char bytes[8];
    in.read(bytes, 8);
    if (!in) throw IoError("truncated volume file " + file.string());
    std::uint64_t w = 0;
    for (int k = 0; k < 8; ++k)
      w |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[k]))
           << (8 * k);
    v.bits[i] = w;
  }
  return v;
}

}  // namespace sitl
