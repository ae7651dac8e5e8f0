#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "meshflow/marching_cubes.hpp"
#include "meshflow/smoothing.hpp"
#include "meshflow/template_builder.hpp"
#include "meshflow/voxel_grid.hpp"
#include "meshflow/voxelize.hpp"
#include "test_support.hpp"

using namespace meshflow;
using namespace meshflow::testing;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("mvf round trip is bit exact") {
  VoxelGrid grid = VoxelGrid::make_label({4, 3, 2}, {1.5, 2.0, 3.0}, {-1.0, 0.25, 7.0});
  for (size_t i = 0; i < grid.labels.size(); ++i) grid.labels[i] = std::uint8_t(i % 5);
  const std::string path = temp_path("roundtrip_label.mvf");
  save_mvf(grid, path);
  const VoxelGrid back = load_mvf(path);
  CHECK(back.kind == GridKind::label);
  CHECK(back.dims == grid.dims);
  CHECK(back.spacing == grid.spacing);
  CHECK(back.origin == grid.origin);
  CHECK(back.labels == grid.labels);

  // file-level: writing the loaded grid reproduces the file byte for byte
  const std::string path2 = temp_path("roundtrip_label2.mvf");
  save_mvf(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string bytes1((std::istreambuf_iterator<char>(f1)), {});
  const std::string bytes2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(bytes1 == bytes2);

  VoxelGrid prob = VoxelGrid::make_prob({2, 2, 2}, 5, {2.0, 2.0, 3.0});
  for (size_t i = 0; i < prob.values.size(); ++i) prob.values[i] = float(std::sin(double(i)));
  const std::string path3 = temp_path("roundtrip_prob.mvf");
  save_mvf(prob, path3);
  const VoxelGrid prob_back = load_mvf(path3);
  CHECK(prob_back.channels == 5);
  CHECK(prob_back.values == prob.values);
}

TEST_CASE("cross entropy matches closed forms") {
  // saturated softmax: +50 logit on the true class
  VoxelGrid gt = VoxelGrid::make_label({2, 1, 1});
  gt.labels = {1, 3};
  VoxelGrid logits = VoxelGrid::make_prob({2, 1, 1}, 5);
  logits.values[0 * 5 + 1] = 50.0f;
  logits.values[1 * 5 + 3] = 50.0f;
  CHECK(cross_entropy(logits, gt) < 1e-20);

  // all-zero logits, C=5: ln 5 per voxel
  VoxelGrid uniform = VoxelGrid::make_prob({2, 1, 1}, 5);
  CHECK(cross_entropy(uniform, gt) == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  // two voxels, C=2, logistic closed form: softplus(-1)
  VoxelGrid gt2 = VoxelGrid::make_label({2, 1, 1});
  gt2.labels = {0, 1};
  VoxelGrid two = VoxelGrid::make_prob({2, 1, 1}, 2);
  two.values = {1.0f, 0.0f, 0.0f, 1.0f};
  CHECK(cross_entropy(two, gt2) ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("cross entropy properties and errors") {
  VoxelGrid gt = VoxelGrid::make_label({3, 2, 2});
  for (size_t i = 0; i < gt.labels.size(); ++i) gt.labels[i] = std::uint8_t(i % 4);
  // logits on a 0.25 lattice so that the shifted values stay exactly
  // representable in the f32 storage
  VoxelGrid logits = VoxelGrid::make_prob({3, 2, 2}, 4);
  for (size_t i = 0; i < logits.values.size(); ++i)
    logits.values[i] = 0.25f * float(std::floor(8.0 * uniform01(3, i)) - 4.0);

  const double base = cross_entropy(logits, gt);
  CHECK(base >= 0.0);

  // shift invariance: add a constant to all logits of each voxel
  VoxelGrid shifted = logits;
  for (Index v = 0; v < logits.num_voxels(); ++v)
    for (int c = 0; c < 4; ++c) shifted.values[size_t(v) * 4 + c] += 0.75f * float(v % 3);
  CHECK(cross_entropy(shifted, gt) == doctest::Approx(base).epsilon(1e-12));

  VoxelGrid wrong_dims = VoxelGrid::make_label({2, 2, 2});
  CHECK_THROWS_AS(cross_entropy(logits, wrong_dims), Error);

  VoxelGrid bad_class = gt;
  bad_class.labels[0] = 7;
  CHECK_THROWS_AS(cross_entropy(logits, bad_class), Error);
}

TEST_CASE("marching cubes on the analytic sphere") {
  const Vec3i dims(32, 32, 32);
  const Vec3 center(15.5, 15.5, 15.5);
  const VoxelGrid grid = sphere_field(dims, Vec3::Ones(), Vec3::Zero(), center, 10.0);
  const TriMesh mesh = marching_cubes(grid, 0.0);

  const auto chi = euler_characteristic(mesh);
  REQUIRE(chi.size() == 1);
  CHECK(chi[0] == 2);
  CHECK(closed_manifold_no_duplicates(mesh));

  const double volume = enclosed_volume(mesh);
  const double analytic = 4.0 / 3.0 * kPi * 1000.0;
  CHECK(std::abs(volume - analytic) / analytic < 0.05);

  // deterministic output
  const TriMesh again = marching_cubes(grid, 0.0);
  CHECK(again.vertices == mesh.vertices);
  CHECK(again.faces == mesh.faces);
}

TEST_CASE("marching cubes stays manifold on box and torus") {
  const Vec3i dims(24, 24, 24);
  const VoxelGrid box = box_field(dims, Vec3::Ones(), Vec3::Zero(), Vec3(5.2, 6.1, 4.9),
                                  Vec3(17.8, 16.3, 18.2));
  const TriMesh box_mesh = marching_cubes(box, 0.0);
  CHECK(closed_manifold_no_duplicates(box_mesh));
  CHECK(euler_characteristic(box_mesh) == std::vector<int> {2});

  const VoxelGrid torus =
      torus_field(dims, Vec3::Ones(), Vec3::Zero(), Vec3(11.5, 11.5, 11.5), 6.0, 2.5);
  const TriMesh torus_mesh = marching_cubes(torus, 0.0);
  CHECK(closed_manifold_no_duplicates(torus_mesh));
  CHECK(euler_characteristic(torus_mesh) == std::vector<int> {0});
}

TEST_CASE("marching cubes error cases") {
  VoxelGrid constant = VoxelGrid::make_scalar({8, 8, 8});
  CHECK_THROWS_AS(marching_cubes(constant, 0.5), Error);
  try {
    marching_cubes(constant, 0.5);
  } catch (const Error& err) {
    CHECK(err.code() == errc::empty_surface);
  }

  VoxelGrid thin = VoxelGrid::make_scalar({1, 8, 8});
  CHECK_THROWS_AS(marching_cubes(thin, 0.5), Error);
  try {
    marching_cubes(thin, 0.5);
  } catch (const Error& err) {
    CHECK(err.code() == errc::degenerate_grid);
  }
}

TEST_CASE("voxelize labels cube interior centers") {
  // axis-aligned closed cube [0.5, 4.5]^3 on a unit grid: centers 1..4 inside
  const VoxelGrid box = box_field({8, 8, 8}, Vec3::Ones(), Vec3::Zero(), Vec3(0.5, 0.5, 0.5),
                                  Vec3(4.5, 4.5, 4.5));
  const TriMesh cube = marching_cubes(box, 0.0);

  const VoxelGrid reference = VoxelGrid::make_label({8, 8, 8});
  const VoxelGrid filled = voxelize(cube, reference);
  long count = 0;
  for (std::uint8_t v : filled.labels) count += v == 1;
  CHECK(count == 64);
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i) {
        const bool inside = i >= 1 && i <= 4 && j >= 1 && j <= 4 && k >= 1 && k <= 4;
        CHECK(filled.label_at(i, j, k) == (inside ? 1 : 0));
      }
}

TEST_CASE("voxelize handles out-of-extent meshes and open surfaces") {
  TriMesh sphere = icosphere(2, 1.0, Vec3(100.0, 100.0, 100.0));
  const VoxelGrid reference = VoxelGrid::make_label({8, 8, 8});
  const VoxelGrid empty = voxelize(sphere, reference);
  for (std::uint8_t v : empty.labels) CHECK(v == 0);

  // a single triangle is open
  TriMesh open_mesh;
  open_mesh.vertices.resize(3, 3);
  open_mesh.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  open_mesh.faces.resize(1, 3);
  open_mesh.faces << 0, 1, 2;
  open_mesh.organ_of_vertex = VecXi::Constant(3, 1);
  open_mesh.organ_of_face = VecXi::Constant(1, 1);
  CHECK_THROWS_AS(voxelize(open_mesh, reference), Error);
}

TEST_CASE("voxelize resolves nested organs to the smaller id") {
  const Vec3i dims(16, 16, 16);
  const VoxelGrid outer_field = box_field(dims, Vec3::Ones(), Vec3::Zero(), Vec3(2.5, 2.5, 2.5),
                                          Vec3(12.5, 12.5, 12.5));
  const VoxelGrid inner_field = box_field(dims, Vec3::Ones(), Vec3::Zero(), Vec3(5.5, 5.5, 5.5),
                                          Vec3(9.5, 9.5, 9.5));
  TriMesh merged = marching_cubes(outer_field, 0.0, 2);
  append_mesh(merged, marching_cubes(inner_field, 0.0, 1));

  const VoxelGrid filled = voxelize(merged, VoxelGrid::make_label(dims));
  // the nested region is inside both closed surfaces; organ 1 wins
  CHECK(filled.label_at(7, 7, 7) == 1);
  CHECK(filled.label_at(4, 4, 4) == 2);
  CHECK(filled.label_at(1, 1, 1) == 0);
}

TEST_CASE("voxelize of marching cubes recovers rasterized solids") {
  const Vec3i dims(32, 32, 32);
  const VoxelGrid field = sphere_field(dims, Vec3::Ones(), Vec3::Zero(), Vec3(15.5, 15.5, 15.5), 9.0);
  const VoxelGrid labels = field_to_labels(field);
  const TriMesh surface = marching_cubes(field, 0.0);
  const VoxelGrid recovered = voxelize(surface, labels);

  long foreground = 0, matched = 0;
  for (size_t i = 0; i < labels.labels.size(); ++i) {
    if (labels.labels[i] == 1) {
      ++foreground;
      matched += recovered.labels[i] == 1;
    }
  }
  CHECK(double(matched) / double(foreground) >= 0.95);
}

TEST_CASE("laplacian smoothing identity, hull, and variance") {
  const TriMesh ico = icosphere(0, 2.0);
  const TriMesh same = laplacian_smooth(ico, 0);
  CHECK(same.vertices == ico.vertices);
  CHECK(same.faces == ico.faces);

  // convex hull containment for the regular icosahedron: radii never grow
  const TriMesh smoothed = laplacian_smooth(ico, 25);
  CHECK(smoothed.faces == ico.faces);
  for (Index v = 0; v < smoothed.num_vertices(); ++v)
    CHECK(smoothed.vertices.row(v).norm() <= ico.vertices.row(v).norm() + 1e-12);

  // unit cube: edge-length variance strictly decreases after 20 HC steps
  const VoxelGrid box = box_field({12, 12, 12}, Vec3::Ones(), Vec3::Zero(), Vec3(3.2, 3.2, 3.2),
                                  Vec3(8.8, 8.8, 8.8));
  const TriMesh cube = marching_cubes(box, 0.0);
  const auto variance = [](const TriMesh& mesh) {
    const auto edges = edge_set(mesh);
    double mean = 0.0;
    std::vector<double> lengths;
    for (const auto& [i, j] : edges) {
      lengths.push_back((mesh.vertices.row(i) - mesh.vertices.row(j)).norm());
      mean += lengths.back();
    }
    mean /= double(lengths.size());
    double var = 0.0;
    for (double len : lengths) var += (len - mean) * (len - mean);
    return var / double(lengths.size());
  };
  const TriMesh cube_smooth = laplacian_smooth(cube, 20);
  CHECK(variance(cube_smooth) < variance(cube));
}

TEST_CASE("uniform smoothing flag") {
  const TriMesh ico = icosphere(1, 2.0);
  SmoothParams uniform;
  uniform.scheme = SmoothScheme::uniform;
  const TriMesh smoothed = laplacian_smooth(ico, 10, uniform);
  CHECK(smoothed.faces == ico.faces);
  // the plain umbrella operator shrinks; HC pushes back
  const double r_uniform = smoothed.vertices.rowwise().norm().mean();
  const double r_hc = laplacian_smooth(ico, 10).vertices.rowwise().norm().mean();
  CHECK(r_uniform < r_hc);
  CHECK(r_hc <= 2.0 + 1e-12);
}

TEST_CASE("build_template matches single-input marching cubes") {
  const Vec3i dims(24, 24, 24);
  const VoxelGrid field =
      sphere_field(dims, Vec3::Ones(), Vec3::Zero(), Vec3(11.5, 11.5, 11.5), 7.0);
  const VoxelGrid labels = field_to_labels(field);

  const TriMesh from_template = build_template({labels}, 0.3, 20);
  TriMesh direct = marching_cubes(occupancy_fraction({labels}, 1), 0.3, 1);
  direct = laplacian_smooth(direct, 20);
  CHECK(from_template.vertices == direct.vertices);
  CHECK(from_template.faces == direct.faces);

  // duplication invariance
  const TriMesh repeated = build_template({labels, labels, labels}, 0.3, 20);
  CHECK(repeated.vertices == from_template.vertices);
}

TEST_CASE("build_template occupancy threshold and permutation invariance") {
  const Vec3i dims(20, 20, 20);
  const VoxelGrid present =
      field_to_labels(sphere_field(dims, Vec3::Ones(), Vec3::Zero(), Vec3(9.5, 9.5, 9.5), 6.0));
  const VoxelGrid absent = VoxelGrid::make_label(dims);

  // organ present in 2 of 10 inputs: occupancy 0.2 never exceeds 0.3
  std::vector<VoxelGrid> cohort(10, absent);
  cohort[0] = present;
  cohort[1] = present;
  CHECK_THROWS_AS(build_template(cohort, 0.3, 5), Error);
  try {
    build_template(cohort, 0.3, 5);
  } catch (const Error& err) {
    CHECK(err.code() == errc::empty_organ);
  }

  // permutation invariance
  const VoxelGrid shifted =
      field_to_labels(sphere_field(dims, Vec3::Ones(), Vec3::Zero(), Vec3(10.0, 9.0, 9.5), 6.5));
  const TriMesh order_a = build_template({present, shifted, present}, 0.3, 10);
  const TriMesh order_b = build_template({shifted, present, present}, 0.3, 10);
  CHECK(order_a.vertices == order_b.vertices);
  CHECK(order_a.faces == order_b.faces);
}

TEST_CASE("build_template rejects open topology") {
  // a sphere clipped by the grid boundary yields an open surface
  const Vec3i dims(16, 16, 16);
  const VoxelGrid clipped =
      field_to_labels(sphere_field(dims, Vec3::Ones(), Vec3::Zero(), Vec3(0.0, 7.5, 7.5), 6.0));
  CHECK_THROWS_AS(build_template({clipped}, 0.3, 0), Error);
}
