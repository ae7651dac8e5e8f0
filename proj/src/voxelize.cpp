#include "meshflow/voxelize.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "meshflow/parallel.hpp"

namespace meshflow {

namespace {

// Sign of s0 + eps*s1 + eps^2*s2 for an infinitesimal positive eps: the ray
// origin is symbolically nudged off every projected vertex and edge.
int perturbed_sign(double s0, double s1, double s2) {
  if (s0 != 0.0) return s0 > 0.0 ? 1 : -1;
  if (s1 != 0.0) return s1 > 0.0 ? 1 : -1;
  if (s2 != 0.0) return s2 > 0.0 ? 1 : -1;
  return 0;
}

// orient2d of projected edge (a -> b) against query q = (qy + eps, qz + eps^2),
// in the (y, z) plane.
int edge_side(double ay, double az, double by, double bz, double qy, double qz) {
  const double s0 = (by - ay) * (qz - az) - (bz - az) * (qy - ay);
  const double s1 = -(bz - az);   // d/d(eps) through qy
  const double s2 = (by - ay);    // d/d(eps^2) through qz
  return perturbed_sign(s0, s1, s2);
}

struct OrganTris {
  int organ;
  // per triangle: vertex positions
  std::vector<std::array<Vec3, 3>> tris;
};

}  // namespace

VoxelGrid voxelize(const TriMesh& mesh, const VoxelGrid& reference) {
  reference.validate();
  mesh.validate();

  std::vector<OrganTris> organs;
  for (int organ : mesh.organs()) {
    if (organ < 1 || organ > 255)
      raise(errc::invalid_class, "voxelize needs organ ids in [1, 255]");
    TriMesh sub = mesh.organ_submesh(organ);
    if (!is_closed(sub))
      raise(errc::open_surface, "organ " + std::to_string(organ) + " surface is not closed");
    OrganTris ot;
    ot.organ = organ;
    ot.tris.reserve(sub.num_faces());
    for (Index f = 0; f < sub.num_faces(); ++f)
      ot.tris.push_back({sub.vertices.row(sub.faces(f, 0)).transpose(),
                         sub.vertices.row(sub.faces(f, 1)).transpose(),
                         sub.vertices.row(sub.faces(f, 2)).transpose()});
    organs.push_back(std::move(ot));
  }

  VoxelGrid out = VoxelGrid::make_label(reference.dims, reference.spacing, reference.origin);
  const int nx = out.dims.x(), ny = out.dims.y(), nz = out.dims.z();

  // organs sorted ascending; the first containing organ wins (smallest id)
  for (const OrganTris& ot : organs) {
    // bin triangles over (j, k) rows they can affect
    std::vector<std::vector<int>> rows_of_tri(size_t(ny) * nz);
    for (int t = 0; t < int(ot.tris.size()); ++t) {
      const auto& tri = ot.tris[t];
      double ylo = tri[0].y(), yhi = ylo, zlo = tri[0].z(), zhi = zlo;
      for (int c = 1; c < 3; ++c) {
        ylo = std::min(ylo, tri[c].y()); yhi = std::max(yhi, tri[c].y());
        zlo = std::min(zlo, tri[c].z()); zhi = std::max(zhi, tri[c].z());
      }
      const int j0 = std::max(0, int(std::ceil((ylo - out.origin.y()) / out.spacing.y())));
      const int j1 = std::min(ny - 1, int(std::floor((yhi - out.origin.y()) / out.spacing.y())));
      const int k0 = std::max(0, int(std::ceil((zlo - out.origin.z()) / out.spacing.z())));
      const int k1 = std::min(nz - 1, int(std::floor((zhi - out.origin.z()) / out.spacing.z())));
      for (int k = k0; k <= k1; ++k)
        for (int j = j0; j <= j1; ++j) rows_of_tri[size_t(k) * ny + j].push_back(t);
    }

    parallel_for(std::int64_t(ny) * nz, [&](std::int64_t row_begin, std::int64_t row_end) {
      std::vector<double> crossings;
      for (std::int64_t row = row_begin; row < row_end; ++row) {
        const int k = int(row / ny), j = int(row % ny);
        const auto& candidates = rows_of_tri[size_t(row)];
        if (candidates.empty()) continue;
        const double qy = out.origin.y() + j * out.spacing.y();
        const double qz = out.origin.z() + k * out.spacing.z();

        crossings.clear();
        for (int t : candidates) {
          const auto& tri = ot.tris[t];
          const int s0 = edge_side(tri[0].y(), tri[0].z(), tri[1].y(), tri[1].z(), qy, qz);
          const int s1 = edge_side(tri[1].y(), tri[1].z(), tri[2].y(), tri[2].z(), qy, qz);
          const int s2 = edge_side(tri[2].y(), tri[2].z(), tri[0].y(), tri[0].z(), qy, qz);
          if (s0 == 0 || s1 == 0 || s2 == 0) continue;  // degenerate projected edge
          if (s0 != s1 || s1 != s2) continue;           // outside the projection
          // line (qy, qz) crosses the triangle plane at x*
          const Vec3 n = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
          if (n.x() == 0.0) continue;  // parallel: projection has zero area, missed by SoS
          const double x =
              tri[0].x() + (n.y() * (tri[0].y() - qy) + n.z() * (tri[0].z() - qz)) / n.x();
          crossings.push_back(x);
        }
        if (crossings.empty()) continue;
        std::sort(crossings.begin(), crossings.end());

        for (int i = 0; i < nx; ++i) {
          const double qx = out.origin.x() + i * out.spacing.x();
          // parity of crossings strictly ahead of the center
          const auto ahead =
              crossings.end() - std::upper_bound(crossings.begin(), crossings.end(), qx);
          if (ahead % 2 == 1) {
            auto& cell = out.labels[size_t(out.flat(i, j, k))];
            if (cell == 0) cell = std::uint8_t(ot.organ);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace meshflow
