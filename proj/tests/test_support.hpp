#pragma once

// Shared builders and brute-force oracles for the test suites. Everything here
// is deliberately independent of the library's accelerated paths: oracles use
// exhaustive loops only.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "meshflow/rng.hpp"
#include "meshflow/tri_geometry.hpp"
#include "meshflow/trimesh.hpp"
#include "meshflow/voxel_grid.hpp"

namespace meshflow::testing {

inline constexpr double kPi = 3.14159265358979323846;

// --- shape builders -----------------------------------------------------------

/// Icosphere: subdivided icosahedron projected to the sphere.
inline TriMesh icosphere(int subdivisions, double radius = 1.0, Vec3 center = Vec3::Zero(),
                         int organ = 1) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
  };
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
      {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
      {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
  };
  for (Vec3& v : verts) v.normalize();

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    const auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec3 m = (verts[a] + verts[b]).normalized();
      verts.push_back(m);
      const int idx = int(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    faces = std::move(next);
  }

  TriMesh mesh;
  mesh.vertices.resize(Index(verts.size()), 3);
  for (Index v = 0; v < Index(verts.size()); ++v)
    mesh.vertices.row(v) = (center + radius * verts[size_t(v)]).transpose();
  mesh.faces.resize(Index(faces.size()), 3);
  for (Index f = 0; f < Index(faces.size()); ++f)
    for (int k = 0; k < 3; ++k) mesh.faces(f, k) = faces[size_t(f)][k];
  mesh.organ_of_vertex = VecXi::Constant(mesh.num_vertices(), organ);
  mesh.organ_of_face = VecXi::Constant(mesh.num_faces(), organ);
  return mesh;
}

/// Radially scale an icosphere into a smooth star-shaped blob.
inline TriMesh star_blob(int subdivisions, double radius, Vec3 center, std::uint64_t seed,
                         double amplitude = 0.2, int organ = 1) {
  TriMesh mesh = icosphere(subdivisions, 1.0, Vec3::Zero(), organ);
  const double f1 = 2.0 + uniform01(seed, 1);
  const double f2 = 2.0 + uniform01(seed, 2);
  const double f3 = 2.0 + uniform01(seed, 3);
  const double p1 = 2.0 * kPi * uniform01(seed, 4);
  const double p2 = 2.0 * kPi * uniform01(seed, 5);
  for (Index v = 0; v < mesh.num_vertices(); ++v) {
    const Vec3 n = mesh.vertices.row(v).transpose();
    const double bump = amplitude * (std::sin(f1 * n.x() + p1) * std::cos(f2 * n.y() + p2) +
                                     0.5 * std::sin(f3 * n.z())) / 1.5;
    mesh.vertices.row(v) = (center + radius * (1.0 + bump) * n).transpose();
  }
  return mesh;
}

/// Inside-positive sphere field: value = radius - |p - center|.
inline VoxelGrid sphere_field(Vec3i dims, Vec3 spacing, Vec3 origin, Vec3 center, double radius) {
  VoxelGrid grid = VoxelGrid::make_scalar(dims, spacing, origin);
  for (int k = 0; k < dims.z(); ++k)
    for (int j = 0; j < dims.y(); ++j)
      for (int i = 0; i < dims.x(); ++i)
        grid.values[size_t(grid.flat(i, j, k))] =
            float(radius - (grid.world(i, j, k) - center).norm());
  return grid;
}

/// Inside-positive axis-aligned box field (signed distance in the max norm).
inline VoxelGrid box_field(Vec3i dims, Vec3 spacing, Vec3 origin, Vec3 lo, Vec3 hi) {
  VoxelGrid grid = VoxelGrid::make_scalar(dims, spacing, origin);
  for (int k = 0; k < dims.z(); ++k)
    for (int j = 0; j < dims.y(); ++j)
      for (int i = 0; i < dims.x(); ++i) {
        const Vec3 p = grid.world(i, j, k);
        const Vec3 d = (lo - p).cwiseMax(p - hi);  // > 0 outside per axis
        grid.values[size_t(grid.flat(i, j, k))] = float(-d.maxCoeff());
      }
  return grid;
}

/// Inside-positive torus field around the z axis.
inline VoxelGrid torus_field(Vec3i dims, Vec3 spacing, Vec3 origin, Vec3 center, double major,
                             double minor) {
  VoxelGrid grid = VoxelGrid::make_scalar(dims, spacing, origin);
  for (int k = 0; k < dims.z(); ++k)
    for (int j = 0; j < dims.y(); ++j)
      for (int i = 0; i < dims.x(); ++i) {
        const Vec3 p = grid.world(i, j, k) - center;
        const double ring = std::hypot(p.x(), p.y()) - major;
        grid.values[size_t(grid.flat(i, j, k))] = float(minor - std::hypot(ring, p.z()));
      }
  return grid;
}

/// Label rasterization of an inside-positive field.
inline VoxelGrid field_to_labels(const VoxelGrid& field, int cls = 1) {
  VoxelGrid out = VoxelGrid::make_label(field.dims, field.spacing, field.origin);
  for (size_t i = 0; i < field.values.size(); ++i)
    if (field.values[i] > 0.0f) out.labels[i] = std::uint8_t(cls);
  return out;
}

/// Well-spread random point cloud (coordinates uniform in [lo, hi)).
inline MatX3 random_points(Index n, double lo, double hi, std::uint64_t seed) {
  MatX3 points(n, 3);
  for (Index i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      points(i, c) = lo + (hi - lo) * uniform01(seed, std::uint64_t(i), std::uint64_t(c));
  return points;
}

/// Random closed mesh: an icosphere with radial noise (valid, generic).
inline TriMesh random_mesh(int subdivisions, std::uint64_t seed, double radius = 1.0,
                           double noise = 0.25, int organ = 1) {
  TriMesh mesh = icosphere(subdivisions, radius, Vec3::Zero(), organ);
  for (Index v = 0; v < mesh.num_vertices(); ++v) {
    const double bump = 1.0 + noise * (uniform01(seed, std::uint64_t(v)) - 0.5);
    mesh.vertices.row(v) *= bump;
  }
  return mesh;
}

// --- oracles -------------------------------------------------------------------

/// All-pairs nearest neighbor (lowest index on ties).
inline Index brute_nearest(const MatX3& points, const Vec3& query, double* sq_out = nullptr) {
  Index best = -1;
  double best_sq = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < points.rows(); ++i) {
    const double sq = (points.row(i).transpose() - query).squaredNorm();
    if (sq < best_sq) {
      best_sq = sq;
      best = i;
    }
  }
  if (sq_out) *sq_out = best_sq;
  return best;
}

/// Brute-force symmetric Chamfer value.
inline double brute_chamfer(const MatX3& a, const MatX3& b) {
  double term1 = 0.0, term2 = 0.0;
  double sq;
  for (Index i = 0; i < b.rows(); ++i) {
    brute_nearest(a, b.row(i).transpose(), &sq);
    term1 += sq;
  }
  for (Index i = 0; i < a.rows(); ++i) {
    brute_nearest(b, a.row(i).transpose(), &sq);
    term2 += sq;
  }
  return term1 / double(b.rows()) + term2 / double(a.rows());
}

/// Exact min distance from a point to any face of a mesh (exhaustive).
inline double brute_surface_dist(const Vec3& p, const TriMesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (Index f = 0; f < mesh.num_faces(); ++f)
    best = std::min(best, point_triangle_sq_dist(p, mesh.vertices.row(mesh.faces(f, 0)).transpose(),
                                                 mesh.vertices.row(mesh.faces(f, 1)).transpose(),
                                                 mesh.vertices.row(mesh.faces(f, 2)).transpose()));
  return std::sqrt(best);
}

/// Exhaustive same-organ self-intersection flags (non-adjacent proper pairs).
inline std::vector<char> brute_self_intersections(const TriMesh& mesh) {
  std::vector<char> flags(size_t(mesh.num_faces()), 0);
  const auto share_vertex = [&](Index f, Index g) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (mesh.faces(f, i) == mesh.faces(g, j)) return true;
    return false;
  };
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    for (Index g = f + 1; g < mesh.num_faces(); ++g) {
      if (mesh.organ_of_face[f] != mesh.organ_of_face[g]) continue;
      if (share_vertex(f, g)) continue;
      if (tri_tri_intersect(mesh.vertices.row(mesh.faces(f, 0)).transpose(),
                            mesh.vertices.row(mesh.faces(f, 1)).transpose(),
                            mesh.vertices.row(mesh.faces(f, 2)).transpose(),
                            mesh.vertices.row(mesh.faces(g, 0)).transpose(),
                            mesh.vertices.row(mesh.faces(g, 1)).transpose(),
                            mesh.vertices.row(mesh.faces(g, 2)).transpose())) {
        flags[size_t(f)] = 1;
        flags[size_t(g)] = 1;
      }
    }
  }
  return flags;
}

/// Exhaustive cross-organ intersecting pair count.
inline long brute_inter_mesh_pairs(const TriMesh& mesh) {
  long pairs = 0;
  for (Index f = 0; f < mesh.num_faces(); ++f)
    for (Index g = f + 1; g < mesh.num_faces(); ++g) {
      if (mesh.organ_of_face[f] == mesh.organ_of_face[g]) continue;
      if (tri_tri_intersect(mesh.vertices.row(mesh.faces(f, 0)).transpose(),
                            mesh.vertices.row(mesh.faces(f, 1)).transpose(),
                            mesh.vertices.row(mesh.faces(f, 2)).transpose(),
                            mesh.vertices.row(mesh.faces(g, 0)).transpose(),
                            mesh.vertices.row(mesh.faces(g, 1)).transpose(),
                            mesh.vertices.row(mesh.faces(g, 2)).transpose()))
        ++pairs;
    }
  return pairs;
}

/// Every undirected edge incident to exactly two faces and no duplicate faces.
inline bool closed_manifold_no_duplicates(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> incidence;
  std::map<std::array<int, 3>, int> face_multiset;
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    std::array<int, 3> sorted {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
    std::sort(sorted.begin(), sorted.end());
    if (++face_multiset[sorted] > 1) return false;
    for (int k = 0; k < 3; ++k) {
      int i = mesh.faces(f, k), j = mesh.faces(f, (k + 1) % 3);
      if (i > j) std::swap(i, j);
      ++incidence[{i, j}];
    }
  }
  for (const auto& [edge, count] : incidence)
    if (count != 2) return false;
  return true;
}

}  // namespace meshflow::testing
