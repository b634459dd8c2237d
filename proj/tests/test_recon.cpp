#include "sitl/recon.hpp"

#include "sitl/error.hpp"
#include "sitl/rng.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace sitl;

namespace {

ImageBuffer blank_mask(int w, int h) { return ImageBuffer(w, h, 0); }

void set_on(ImageBuffer& m, int x, int y) {
  for (int c = 0; c < 3; ++c) m.at(x, y, c) = 255;
}

// axis-aligned solid cube of `n` voxels per side at voxel offset (ox,oy,oz)
VoxelVolume make_cube(int n, int ox, int oy, int oz, double pitch = 0.5e-3) {
  VoxelVolume v;
  v.pitch = pitch;
  v.origin = Vec3::Zero();
  v.nx = v.ny = v.nz = n + std::max({ox, oy, oz}) + 2;
  v.bits.assign((static_cast<std::size_t>(v.nx) * v.ny * v.nz + 63) / 64, 0);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) v.set(x + ox, y + oy, z + oz);
  return v;
}

// cylinder phantom: axis along world y at depth z = 0.03, radius 0.02,
// length 0.08 (large enough that half-voxel surface dilation stays small)
SliceSet cylinder_slices() {
  SliceSet s;
  s.pixel_pitch = 0.2e-3;
  const int w = 250, h = 300;  // 50 mm wide, 60 mm deep
  const double r = 0.02, zc = 0.03;
  for (int k = 0; k < 160; ++k) {
    const double ys = k * 0.5e-3;
    ImageBuffer mask = blank_mask(w, h);
    for (int j = 0; j < h; ++j)
      for (int i = 0; i < w; ++i) {
        const double x = (i - (w - 1) / 2.0) * s.pixel_pitch;
        const double z = j * s.pixel_pitch;
        if (x * x + (z - zc) * (z - zc) <= r * r) set_on(mask, i, j);
      }
    s.masks.push_back(std::move(mask));
    s.poses.push_back({Rotation::identity(), Vec3(0, ys, 0)});
  }
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("recon");

TEST_CASE("a single on-pixel lands in exactly one voxel") {
  SliceSet s;
  s.pixel_pitch = 0.1e-3;
  ImageBuffer mask = blank_mask(101, 101);
  set_on(mask, 50, 50);  // mask center column, row 50
  s.masks.push_back(mask);
  s.poses.push_back(Pose::identity());

  const VoxelVolume v = compound(s, 0.5e-3);
  CHECK(v.occupied_count() == 1);
  const Vec3 expected =
      SliceSet::default_plane_placement().apply(Vec3(0.0, 50 * 0.1e-3, 0.0));
  const Vec3 center = v.occupied_centers().front();
  CHECK((center - expected).norm() <= 0.5 * 0.5e-3 * std::sqrt(3.0));
}

TEST_CASE("compounding identical slices is idempotent") {
  SliceSet s;
  s.pixel_pitch = 0.1e-3;
  ImageBuffer mask = blank_mask(101, 101);
  for (int i = 20; i < 60; ++i) set_on(mask, i, 30 + i / 4);
  s.masks = {mask, mask};
  s.poses = {Pose::identity(), Pose::identity()};
  const VoxelVolume two = compound(s, 0.5e-3);

  s.masks = {mask};
  s.poses = {Pose::identity()};
  const VoxelVolume one = compound(s, 0.5e-3);
  CHECK(two.occupied_count() == one.occupied_count());
}

TEST_CASE("cylinder phantom volume matches the analytic value within 5%") {
  const VoxelVolume v = compound(cylinder_slices(), 0.5e-3);
  const double analytic = kPi * 0.02 * 0.02 * 0.08;  // pi r^2 L
  const double measured =
      static_cast<double>(v.occupied_count()) * std::pow(0.5e-3, 3);
  CHECK(std::abs(measured - analytic) / analytic < 0.05);
}

TEST_CASE("empty input is rejected") {
  SliceSet s;
  CHECK_THROWS_AS(compound(s, 0.5e-3), EmptyInput);
}

TEST_CASE("identical volumes have perfect metrics") {
  const VoxelVolume a = make_cube(20, 0, 0, 0);
  const VolumeMetrics m = volume_metrics(a, a);
  CHECK(m.hausdorff_mm == 0.0);
  CHECK(m.chamfer_mm == 0.0);
  CHECK(m.dice == 1.0);
  CHECK(m.jaccard == 1.0);
}

TEST_CASE("a two-voxel shift of a solid cube gives hausdorff 1 mm") {
  const VoxelVolume a = make_cube(20, 0, 0, 0);
  const VoxelVolume b = make_cube(20, 2, 0, 0);
  const VolumeMetrics m = volume_metrics(a, b);
  CHECK(m.hausdorff_mm == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.chamfer_mm <= m.hausdorff_mm);
}

TEST_CASE("half-overlapping equal cubes score dice 0.5 and jaccard 1/3") {
  const VoxelVolume a = make_cube(20, 0, 0, 0);
  const VoxelVolume b = make_cube(20, 10, 0, 0);
  const VolumeMetrics m = volume_metrics(a, b);
  CHECK(m.dice == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.jaccard == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("metric properties hold over random volume pairs") {
  Rng rng(111);
  for (int trial = 0; trial < 10; ++trial) {
    VoxelVolume a = make_cube(6, 0, 0, 0);
    VoxelVolume b = make_cube(6, 0, 0, 0);
    // random extra voxels
    for (int i = 0; i < 40; ++i) {
      a.set(rng.uniform_index(a.nx), rng.uniform_index(a.ny),
            rng.uniform_index(a.nz));
      b.set(rng.uniform_index(b.nx), rng.uniform_index(b.ny),
            rng.uniform_index(b.nz));
    }
    const VolumeMetrics ab = volume_metrics(a, b);
    const VolumeMetrics ba = volume_metrics(b, a);
    CHECK(ab.hausdorff_mm == ba.hausdorff_mm);
    CHECK(ab.chamfer_mm == doctest::Approx(ba.chamfer_mm).epsilon(1e-12));
    CHECK(ab.dice >= 0.0);
    CHECK(ab.dice <= 1.0);
    CHECK(ab.jaccard >= 0.0);
    CHECK(ab.jaccard <= 1.0);
    CHECK(ab.chamfer_mm <= ab.hausdorff_mm + 1e-12);
    // dice-jaccard identity
    CHECK(ab.dice ==
          doctest::Approx(2 * ab.jaccard / (1 + ab.jaccard)).epsilon(1e-12));
  }
}

TEST_CASE("pose perturbation shows up as hausdorff distance") {
  const SliceSet clean = cylinder_slices();
  SliceSet shifted = clean;
  const double eps = 3e-3;
  for (auto& p : shifted.poses) p.translation.x() += eps;
  const VoxelVolume a = compound(clean, 0.5e-3);
  const VoxelVolume b = compound(shifted, 0.5e-3);
  const VolumeMetrics m = volume_metrics(a, b);
  CHECK(m.hausdorff_mm >= (eps - 0.5e-3) * 1000.0);
}

TEST_CASE("pitch mismatch and empty volumes are rejected") {
  const VoxelVolume a = make_cube(5, 0, 0, 0, 0.5e-3);
  const VoxelVolume b = make_cube(5, 0, 0, 0, 0.4e-3);
  CHECK_THROWS_AS(volume_metrics(a, b), PitchMismatch);

  VoxelVolume empty;
  empty.pitch = 0.5e-3;
  empty.nx = empty.ny = empty.nz = 4;
  empty.bits.assign(1, 0);
  CHECK_THROWS_AS(volume_metrics(a, empty), EmptyVolume);
}

TEST_CASE("volume file round trip") {
  const auto dir = test::scratch_dir("recon");
  const VoxelVolume v = compound(cylinder_slices(), 1.0e-3);
  save_volume(dir / "cyl.vol", v);
  const VoxelVolume back = load_volume(dir / "cyl.vol");
  CHECK(back.nx == v.nx);
  CHECK(back.ny == v.ny);
  CHECK(back.nz == v.nz);
  CHECK(back.pitch == v.pitch);
  CHECK((back.origin - v.origin).norm() == 0.0);
  CHECK(back.bits == v.bits);
}

TEST_SUITE_END();
