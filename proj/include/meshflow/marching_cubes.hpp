#pragma once

#include "meshflow/trimesh.hpp"
#include "meshflow/voxel_grid.hpp"

namespace meshflow {

/// Extract the iso-surface of a scalar (or label, binarized by caller) grid
/// with the standard 256-case table. The solid is the region { value > iso };
/// triangles wind counter-clockwise seen from outside it, so enclosed_volume
/// of a closed output is positive. Crossing vertices are interpolated along
/// lattice edges in canonical low-to-high corner order, which makes the output
/// independent of cell traversal and bit-deterministic.
///
/// The produced organ id is `organ` on every face/vertex.
TriMesh marching_cubes(const VoxelGrid& grid, double iso, int organ = 1);

}  // namespace meshflow
