#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "meshflow/trimesh.hpp"
#include "meshflow/voxel_grid.hpp"

namespace meshflow {

struct OrganMetrics {
  int organ = 0;
  std::optional<double> dice;  // absent when no label grids are available
  double assd = 0.0;   // mm
  double hd99 = 0.0;   // mm
  double sif = 0.0;    // percent
};

struct MetricReport {
  std::vector<OrganMetrics> per_organ;
  OrganMetrics macro;  // unweighted mean over organs
};

/// 2|A and B| / (|A| + |B|) for voxels of class `cls`; 1.0 when both empty.
double dice(const VoxelGrid& a, const VoxelGrid& b, int cls);

/// Average symmetric surface distance: pooled mean over points sampled on each
/// mesh of the exact distance to the other surface.
double assd(const TriMesh& a, const TriMesh& b, Index n_samples = 50000, std::uint64_t seed = 0);

/// Nearest-rank 99th percentile of the pooled bidirectional sample distances.
double hd99(const TriMesh& a, const TriMesh& b, Index n_samples = 50000, std::uint64_t seed = 0);

/// Percentage of faces properly intersecting a non-adjacent face of the same
/// organ. Faces sharing a vertex index are never tested against each other.
double sif_percent(const TriMesh& mesh);

/// Exact count of properly intersecting face pairs whose faces belong to
/// different organs.
long inter_mesh_intersections(const TriMesh& mesh);

/// Per-organ + macro report for a predicted mesh against ground truth given as
/// a mesh and/or a label grid. Mesh Dice is dice(voxelize(pred), gt labels) on
/// the label grid; absent without one.
MetricReport evaluate_mesh(const TriMesh& pred, const std::optional<TriMesh>& gt_mesh,
                           const std::optional<VoxelGrid>& gt_labels,
                           Index n_samples = 50000, std::uint64_t seed = 0);

void save_metrics_csv(const MetricReport& report, const std::string& path);
std::string format_metrics_text(const MetricReport& report);

}  // namespace meshflow
