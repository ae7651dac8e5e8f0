#include "meshflow/marching_cubes.hpp"

#include <array>
#include <unordered_map>
#include <vector>

#include "mc_tables.hpp"

namespace meshflow {

namespace {

// Cube corner offsets in Bloyd's ordering.
constexpr int kCorner[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
};

// Cube edge -> (low corner offset, axis), canonical low-to-high within the
// lattice so both cells sharing an edge interpolate identically.
struct EdgeDef {
  int di, dj, dk, axis;
};
constexpr EdgeDef kEdge[12] = {
    {0, 0, 0, 0},  // 0: 0-1
    {1, 0, 0, 1},  // 1: 1-2
    {0, 1, 0, 0},  // 2: 3-2
    {0, 0, 0, 1},  // 3: 0-3
    {0, 0, 1, 0},  // 4: 4-5
    {1, 0, 1, 1},  // 5: 5-6
    {0, 1, 1, 0},  // 6: 7-6
    {0, 0, 1, 1},  // 7: 4-7
    {0, 0, 0, 2},  // 8: 0-4
    {1, 0, 0, 2},  // 9: 1-5
    {1, 1, 0, 2},  // 10: 2-6
    {0, 1, 0, 2},  // 11: 3-7
};

double grid_scalar(const VoxelGrid& grid, int i, int j, int k) {
  return grid.kind == GridKind::label ? double(grid.label_at(i, j, k))
                                      : double(grid.value_at(i, j, k));
}

}  // namespace

TriMesh marching_cubes(const VoxelGrid& grid, double iso, int organ) {
  if (grid.kind == GridKind::prob) raise(errc::shape_mismatch, "marching_cubes needs scalar data");
  grid.validate();
  if (grid.dims.minCoeff() < 2) raise(errc::degenerate_grid, "marching_cubes needs >= 2 voxels per axis");

  const int nx = grid.dims.x(), ny = grid.dims.y(), nz = grid.dims.z();

  // one shared vertex per crossed lattice edge, keyed (node, axis)
  std::unordered_map<std::uint64_t, int> vertex_of_edge;
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;

  const auto edge_key = [&](int i, int j, int k, int axis) {
    const std::uint64_t node =
        std::uint64_t(i) + std::uint64_t(nx) * (std::uint64_t(j) + std::uint64_t(ny) * std::uint64_t(k));
    return node * 3 + std::uint64_t(axis);
  };

  const auto edge_vertex = [&](int i, int j, int k, int axis) {
    const std::uint64_t key = edge_key(i, j, k, axis);
    const auto it = vertex_of_edge.find(key);
    if (it != vertex_of_edge.end()) return it->second;
    int i1 = i + (axis == 0), j1 = j + (axis == 1), k1 = k + (axis == 2);
    const double v0 = grid_scalar(grid, i, j, k);
    const double v1 = grid_scalar(grid, i1, j1, k1);
    // crossing guaranteed by the case table; v0 != v1
    const double t = (iso - v0) / (v1 - v0);
    const Vec3 p0 = grid.world(i, j, k);
    const Vec3 p1 = grid.world(i1, j1, k1);
    const int idx = int(verts.size());
    verts.push_back(p0 + t * (p1 - p0));
    vertex_of_edge.emplace(key, idx);
    return idx;
  };

  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        // bit c set when the corner is outside the solid { value > iso }
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          const double v =
              grid_scalar(grid, i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (!(v > iso)) config |= 1 << c;
        }
        if (detail::kEdgeTable[config] == 0) continue;

        int cell_vertex[12];
        for (int e = 0; e < 12; ++e) {
          if (detail::kEdgeTable[config] & (1 << e)) {
            const EdgeDef& d = kEdge[e];
            cell_vertex[e] = edge_vertex(i + d.di, j + d.dj, k + d.dk, d.axis);
          }
        }
        for (const int* t = detail::kTriTable[config]; *t >= 0; t += 3)
          faces.push_back({cell_vertex[t[0]], cell_vertex[t[1]], cell_vertex[t[2]]});
      }
    }
  }

  if (faces.empty()) raise(errc::empty_surface, "no voxel edge crosses the iso level");

  TriMesh mesh;
  mesh.vertices.resize(Index(verts.size()), 3);
  for (Index v = 0; v < Index(verts.size()); ++v) mesh.vertices.row(v) = verts[v].transpose();
  mesh.faces.resize(Index(faces.size()), 3);
  for (Index f = 0; f < Index(faces.size()); ++f)
    for (int c = 0; c < 3; ++c) mesh.faces(f, c) = faces[f][c];
  mesh.organ_of_vertex = VecXi::Constant(mesh.num_vertices(), organ);
  mesh.organ_of_face = VecXi::Constant(mesh.num_faces(), organ);
  return mesh;
}

}  // namespace meshflow
