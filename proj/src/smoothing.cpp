#include "meshflow/smoothing.hpp"

#include <vector>

namespace meshflow {

TriMesh laplacian_smooth(const TriMesh& mesh, int steps, const SmoothParams& params) {
  if (steps < 0) raise(errc::config_error, "negative smoothing step count");
  TriMesh out = mesh;
  if (steps == 0 || mesh.num_vertices() == 0) return out;

  // 1-ring adjacency from unique undirected edges
  const auto edges = edge_set(mesh);
  std::vector<std::vector<int>> ring(mesh.num_vertices());
  for (const auto& [i, j] : edges) {
    ring[i].push_back(j);
    ring[j].push_back(i);
  }

  const MatX3& original = mesh.vertices;
  MatX3 prev = mesh.vertices;
  MatX3 next(mesh.num_vertices(), 3);
  MatX3 correction(mesh.num_vertices(), 3);

  for (int step = 0; step < steps; ++step) {
    for (Index v = 0; v < mesh.num_vertices(); ++v) {
      if (ring[v].empty()) {
        next.row(v) = prev.row(v);
        continue;
      }
      Vec3 mean = Vec3::Zero();
      for (int w : ring[v]) mean += prev.row(w).transpose();
      mean /= double(ring[v].size());
      if (params.scheme == SmoothScheme::uniform) {
        next.row(v) = prev.row(v) + params.lambda * (mean.transpose() - prev.row(v));
      } else {
        next.row(v) = mean.transpose();
      }
    }

    if (params.scheme == SmoothScheme::hc) {
      // Vollmer pushback: b = moved - (alpha*original + (1-alpha)*previous),
      // then subtract beta*b_v + (1-beta)*mean of neighbor b.
      for (Index v = 0; v < mesh.num_vertices(); ++v)
        correction.row(v) =
            next.row(v) - (params.alpha * original.row(v) + (1.0 - params.alpha) * prev.row(v));
      for (Index v = 0; v < mesh.num_vertices(); ++v) {
        if (ring[v].empty()) continue;
        Vec3 mean_b = Vec3::Zero();
        for (int w : ring[v]) mean_b += correction.row(w).transpose();
        mean_b /= double(ring[v].size());
        next.row(v) -=
            params.beta * correction.row(v) + (1.0 - params.beta) * mean_b.transpose();
      }
    }
    prev.swap(next);
  }

  out.vertices = prev;
  return out;
}

}  // namespace meshflow
