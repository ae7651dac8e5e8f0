#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "meshflow/marching_cubes.hpp"
#include "meshflow/trimesh.hpp"
#include "test_support.hpp"

using namespace meshflow;
using namespace meshflow::testing;

namespace {

TriMesh triangle_pair_sharing_edge() {
  TriMesh mesh;
  mesh.vertices.resize(4, 3);
  mesh.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0;
  mesh.faces.resize(2, 3);
  mesh.faces << 0, 1, 2, 1, 3, 2;
  mesh.organ_of_vertex = VecXi::Constant(4, 1);
  mesh.organ_of_face = VecXi::Constant(2, 1);
  return mesh;
}

TriMesh tetrahedron(Vec3 offset = Vec3::Zero(), int organ = 1) {
  TriMesh mesh;
  mesh.vertices.resize(4, 3);
  mesh.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  mesh.vertices.rowwise() += offset.transpose();
  mesh.faces.resize(4, 3);
  mesh.faces << 0, 2, 1, 0, 1, 3, 0, 3, 2, 1, 2, 3;
  mesh.organ_of_vertex = VecXi::Constant(4, organ);
  mesh.organ_of_face = VecXi::Constant(4, organ);
  return mesh;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("connected components") {
  CHECK(connected_components(icosphere(2)).faces.size() == 1);

  // five components, four organ ids (both kidneys labeled 2)
  TriMesh multi = icosphere(1, 1.0, Vec3(0, 0, 0), 1);          // liver
  append_mesh(multi, icosphere(1, 0.5, Vec3(3, 0, 0), 2));      // kidney L
  append_mesh(multi, icosphere(1, 0.5, Vec3(-3, 0, 0), 2));     // kidney R
  append_mesh(multi, icosphere(1, 0.6, Vec3(0, 3, 0), 3));      // spleen
  append_mesh(multi, icosphere(1, 0.4, Vec3(0, -3, 0), 4));     // pancreas
  CHECK(connected_components(multi).faces.size() == 5);
  CHECK(multi.organs() == std::vector<int> {1, 2, 3, 4});

  TriMesh two_triangles;
  two_triangles.vertices.resize(6, 3);
  two_triangles.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 5, 5, 5, 6, 5, 5, 5, 6, 5;
  two_triangles.faces.resize(2, 3);
  two_triangles.faces << 0, 1, 2, 3, 4, 5;
  two_triangles.organ_of_vertex = VecXi::Constant(6, 1);
  two_triangles.organ_of_face = VecXi::Constant(2, 1);
  const MeshComponents comps = connected_components(two_triangles);
  CHECK(comps.faces.size() == 2);
  // stable ordering by smallest vertex index
  CHECK(comps.vertices[0].front() == 0);
  CHECK(comps.vertices[1].front() == 3);
}

TEST_CASE("euler characteristic") {
  CHECK(euler_characteristic(tetrahedron()) == std::vector<int> {2});
  CHECK(euler_characteristic(icosphere(0)) == std::vector<int> {2});

  TriMesh two = tetrahedron();
  append_mesh(two, tetrahedron(Vec3(10, 0, 0)));
  CHECK(euler_characteristic(two) == std::vector<int> {2, 2});
}

TEST_CASE("edge set") {
  TriMesh tri;
  tri.vertices.resize(3, 3);
  tri.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  tri.faces.resize(1, 3);
  tri.faces << 0, 1, 2;
  tri.organ_of_vertex = VecXi::Constant(3, 1);
  tri.organ_of_face = VecXi::Constant(1, 1);
  CHECK(edge_set(tri).size() == 3);

  CHECK(edge_set(tetrahedron()).size() == 6);
  CHECK(edge_set(triangle_pair_sharing_edge()).size() == 5);

  // sorted (i < j), lexicographic
  const auto edges = edge_set(tetrahedron());
  for (const auto& [i, j] : edges) CHECK(i < j);
  CHECK(std::is_sorted(edges.begin(), edges.end()));
}

TEST_CASE("surface sampling basics") {
  TriMesh tri;
  tri.vertices.resize(3, 3);
  tri.vertices << 0, 0, 0, 2, 0, 0, 0, 2, 0;
  tri.faces.resize(1, 3);
  tri.faces << 0, 1, 2;
  tri.organ_of_vertex = VecXi::Constant(3, 1);
  tri.organ_of_face = VecXi::Constant(1, 1);

  const auto samples = sample_surface(tri, 3, 17);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].points.rows() == 3);
  for (Index i = 0; i < 3; ++i) {
    const Vec3 p = samples[0].points.row(i).transpose();
    CHECK(p.z() == 0.0);
    CHECK(p.x() >= 0.0);
    CHECK(p.y() >= 0.0);
    CHECK(p.x() + p.y() <= 2.0 + 1e-12);
  }

  // determinism
  const auto again = sample_surface(tri, 3, 17);
  CHECK(again[0].points == samples[0].points);

  // zero-area organ
  TriMesh degenerate = tri;
  degenerate.vertices.row(1) = degenerate.vertices.row(0);
  degenerate.vertices.row(2) = degenerate.vertices.row(0);
  CHECK_THROWS_AS(sample_surface(degenerate, 5, 0), Error);
}

TEST_CASE("sampling is area proportional and centroid convergent") {
  // cube mesh from 12 equal-ish triangles: use two axis triangles per face
  const VoxelGrid box = box_field({6, 6, 6}, Vec3::Ones(), Vec3::Zero(), Vec3(1.5, 1.5, 1.5),
                                  Vec3(3.5, 3.5, 3.5));
  const TriMesh cube = marching_cubes(box, 0.0);

  const Index n = 50000;
  const auto samples = sample_surface(cube, n, 5);
  REQUIRE(samples.size() == 1);

  // mean converges to the area-weighted centroid = cube center (2.5^3)
  const Vec3 mean = samples[0].points.colwise().mean().transpose();
  const double diag = (Vec3(3.5, 3.5, 3.5) - Vec3(1.5, 1.5, 1.5)).norm();
  CHECK((mean - Vec3(2.5, 2.5, 2.5)).norm() < 0.01 * diag);

  // per-face counts proportional to area within 3% for equal-area faces
  TriMesh square;
  square.vertices.resize(4, 3);
  square.vertices << 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0;
  square.faces.resize(2, 3);
  square.faces << 0, 1, 2, 0, 2, 3;
  square.organ_of_vertex = VecXi::Constant(4, 1);
  square.organ_of_face = VecXi::Constant(2, 1);
  const auto assignment = assign_samples(square, 120000, 11);
  REQUIRE(assignment.size() == 1);
  Index on_first = 0;
  for (Index s = 0; s < assignment[0].face.size(); ++s) on_first += assignment[0].face[s] == 0;
  CHECK(std::abs(double(on_first) - 60000.0) < 0.03 * 60000.0);
}

TEST_CASE("mesh volume and area") {
  const TriMesh sphere = icosphere(4, 2.0);
  CHECK(enclosed_volume(sphere) == doctest::Approx(4.0 / 3.0 * kPi * 8.0).epsilon(0.01));
  CHECK(total_area(sphere) == doctest::Approx(4.0 * kPi * 4.0).epsilon(0.01));
  CHECK(is_closed(sphere));
}

TEST_CASE("obj round trip preserves vertex order and organs") {
  TriMesh multi = star_blob(2, 1.0, Vec3(0.5, -0.25, 1.0), 3);
  append_mesh(multi, icosphere(1, 0.5, Vec3(3, 0, 0), 4));

  const std::string path = temp_path("mesh_roundtrip.obj");
  save_obj(multi, path);
  const TriMesh back = load_obj(path);

  CHECK(back.faces == multi.faces);
  CHECK(back.organ_of_face == multi.organ_of_face);
  CHECK(back.organ_of_vertex == multi.organ_of_vertex);
  CHECK(back.num_vertices() == multi.num_vertices());
  CHECK((back.vertices - multi.vertices).cwiseAbs().maxCoeff() == 0.0);

  // writing twice is bit-identical
  const std::string path2 = temp_path("mesh_roundtrip2.obj");
  save_obj(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {});
  const std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
}

TEST_CASE("organ name sidecar") {
  const std::string path = temp_path("organs.txt");
  save_organ_names({{1, "liver"}, {2, "kidneys"}, {3, "spleen"}, {4, "pancreas"}}, path);
  const auto names = load_organ_names(path);
  REQUIRE(names.size() == 4);
  CHECK(names[0] == std::pair<int, std::string>(1, "liver"));
  CHECK(names[3] == std::pair<int, std::string>(4, "pancreas"));
}

TEST_CASE("validate rejects malformed meshes") {
  TriMesh bad = tetrahedron();
  bad.faces(0, 1) = 9;
  CHECK_THROWS_AS(bad.validate(), Error);

  TriMesh degenerate = tetrahedron();
  degenerate.faces(0, 1) = degenerate.faces(0, 0);
  CHECK_THROWS_AS(degenerate.validate(), Error);

  TriMesh cross_organ = tetrahedron();
  cross_organ.organ_of_vertex[1] = 2;
  CHECK_THROWS_AS(cross_organ.validate(), Error);
}

TEST_CASE("organ submesh keeps geometry and maps back") {
  TriMesh multi = icosphere(1, 1.0, Vec3::Zero(), 1);
  append_mesh(multi, icosphere(1, 0.5, Vec3(4, 0, 0), 2));

  std::vector<Index> vmap;
  const TriMesh sub = multi.organ_submesh(2, &vmap);
  CHECK(sub.organs() == std::vector<int> {2});
  for (Index v = 0; v < sub.num_vertices(); ++v)
    CHECK(sub.vertices.row(v) == multi.vertices.row(vmap[size_t(v)]));
  sub.validate();
}
