#pragma once

#include <vector>

#include "meshflow/trimesh.hpp"
#include "meshflow/voxel_grid.hpp"

namespace meshflow {

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  MatX3 apply(const MatX3& points) const;
  RigidTransform inverse() const;

  /// ||R^T R - I||_inf small and det R = +1.
  bool orthonormal(double tol = 1e-9) const;
};

struct IcpResult {
  RigidTransform transform;
  TriMesh aligned;
  double rms = 0.0;
  int iterations = 0;
};

/// Rigid ICP: alternate nearest-point correspondences (source vertices to
/// target points) with the closed-form SVD solve, reflection-corrected. Stops
/// when the RMS improvement falls below tol. Vertex order preserved.
IcpResult icp_rigid(const TriMesh& source, const SurfaceSamples& target_points,
                    int max_iters = 50, double tol = 1e-6);

struct NricpParams {
  std::vector<double> stiffness_schedule {8.0, 4.0, 2.0, 1.0};
  int inner_iterations = 10;
  double distance_cap = std::numeric_limits<double>::infinity();  // mm
  double normal_angle_cap_deg = 60.0;  // used only when target normals exist
  double gamma = 1.0;   // translation weight inside the stiffness term
  double cg_tol = 1e-8;
  int cg_max_iters = 4000;

  void validate() const;
};

/// Amberg optimal-step non-rigid ICP: per-vertex 3x4 affine transforms from
/// the sparse normal equations of stiffness (node-arc incidence) + data
/// (closest-point) terms, with the stiffness lowered per schedule.
/// Connectivity and vertex order preserved.
TriMesh nricp(const TriMesh& source, const SurfaceSamples& target_points,
              const NricpParams& params = {});

enum class AlignMode { rigid, nonrigid };

struct AlignResult {
  TriMesh aligned;
  // per organ, in organ order of `pred`
  std::vector<int> organs;
  std::vector<double> pre_assd, post_assd;
  std::vector<RigidTransform> transforms;  // rigid mode only
};

/// Register each organ of `pred` to the marching-cubes surface of its class in
/// `seg` (iso 0.5 on the class indicator) and merge the results.
AlignResult align_to_voxels(const TriMesh& pred, const VoxelGrid& seg, AlignMode mode,
                            Index n_surface_samples = 50000, std::uint64_t seed = 0,
                            const NricpParams& params = {});

}  // namespace meshflow
