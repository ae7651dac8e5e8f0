#pragma once

#include "meshflow/trimesh.hpp"
#include "meshflow/voxel_grid.hpp"

namespace meshflow {

/// Rasterize a watertight multi-organ mesh onto the reference lattice: a voxel
/// takes the id of the organ whose closed surface contains its center, decided
/// by parity of +x ray crossings with symbolic perturbation of the ray origin
/// (so vertex/edge grazing is resolved deterministically). Voxels inside
/// several organs take the smallest organ id. Throws Error(open_surface) when
/// an organ component is not closed.
VoxelGrid voxelize(const TriMesh& mesh, const VoxelGrid& reference);

}  // namespace meshflow
