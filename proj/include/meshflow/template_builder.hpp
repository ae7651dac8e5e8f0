#pragma once

#include <vector>

#include "meshflow/smoothing.hpp"
#include "meshflow/trimesh.hpp"
#include "meshflow/voxel_grid.hpp"

namespace meshflow {

/// Consensus template from a cohort of co-registered label volumes: per class,
/// the surface of { occupancy fraction > threshold } extracted with marching
/// cubes and smoothed, all classes merged into one mesh with organ ids.
/// Every organ component must come out closed and genus 0.
///
/// Throws Error(empty_organ) when a class never exceeds the threshold and
/// Error(topology_error) when a component has Euler characteristic != 2.
TriMesh build_template(const std::vector<VoxelGrid>& labels, double threshold = 0.30,
                       int smooth_steps = 20, const SmoothParams& smooth = {});

/// The per-class occupancy fraction grid (scalar in [0,1]).
VoxelGrid occupancy_fraction(const std::vector<VoxelGrid>& labels, int cls);

}  // namespace meshflow
