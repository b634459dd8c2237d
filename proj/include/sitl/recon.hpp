#pragma once

#include "sitl/geometry.hpp"
#include "sitl/image.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sitl {

/// Tracked binary slice masks. Mask pixel (i, j) maps to the probe-frame
/// point probe_from_plane * ((i - (w-1)/2) * pitch, j * pitch, 0): columns
/// run laterally across the image plane, rows run away from the probe tip.
struct SliceSet {
  std::vector<ImageBuffer> masks;  // luminance >= 128 counts as "on"
  std::vector<Pose> poses;         // world_from_probe per slice
  double pixel_pitch = 0.1e-3;     // meters per mask pixel
  Pose probe_from_plane = default_plane_placement();

  static Pose default_plane_placement() {
    // plane x -> probe x, plane y (image rows) -> probe z (depth)
    return {Rotation::from_axis_angle(Vec3(kPi / 2, 0, 0)), Vec3::Zero()};
  }
};

/// Dense occupancy grid on a world-aligned lattice (origin snapped to pitch
/// multiples so grids of equal pitch share one lattice).
struct VoxelVolume {
  Vec3 origin = Vec3::Zero();  // center of voxel (0,0,0)
  double pitch = 0.5e-3;
  int nx = 0, ny = 0, nz = 0;
  std::vector<std::uint64_t> bits;

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  bool get(int x, int y, int z) const {
    const std::size_t i = index(x, y, z);
    return (bits[i >> 6] >> (i & 63)) & 1u;
  }
  void set(int x, int y, int z) {
    const std::size_t i = index(x, y, z);
    bits[i >> 6] |= (1ull << (i & 63));
  }
  std::size_t occupied_count() const;
  /// World coordinates of all occupied voxel centers.
  std::vector<Vec3> occupied_centers() const;
};

/// OR-compound every on-pixel of every mask into the nearest voxel.
VoxelVolume compound(const SliceSet& slices, double voxel_pitch);
VoxelVolume compound_serial(const SliceSet& slices, double voxel_pitch);

struct VolumeMetrics {
  double hausdorff_mm = 0.0;
  double chamfer_mm = 0.0;
  double dice = 0.0;
  double jaccard = 0.0;
};

/// Hausdorff and Chamfer over occupied-voxel center point sets (exact
/// nearest neighbors); Dice and Jaccard over voxel sets on the common
/// lattice. Chamfer is reported as the mean of the two directed average
/// distances, which keeps chamfer <= hausdorff for every pair.
VolumeMetrics volume_metrics(const VoxelVolume& a, const VoxelVolume& b);
VolumeMetrics volume_metrics_serial(const VoxelVolume& a, const VoxelVolume& b);

/// Raw volume container: one JSON header line (dims, origin, pitch) followed
/// by the packed little-endian bitset.
void save_volume(const std::filesystem::path& file, const VoxelVolume& v);
VoxelVolume load_volume(const std::filesystem::path& file);

}  // namespace sitl
