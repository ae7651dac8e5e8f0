#pragma once

#include <array>
#include <string>
#include <vector>

#include "meshflow/trimesh.hpp"
#include "meshflow/types.hpp"

namespace meshflow {

/// Stationary velocity lattice: one mm-per-unit-time 3-vector per node, on a
/// node-centered grid covering the image extent. Queries outside the lattice
/// clamp to the boundary cell so the interpolated velocity stays continuous.
struct FlowField {
  Vec3i dims {0, 0, 0};
  Vec3 spacing {1.0, 1.0, 1.0};
  Vec3 origin {0.0, 0.0, 0.0};
  MatX3 data;  // (dims.prod()) x 3, row-major with x fastest

  static FlowField zeros(Vec3i dims, Vec3 lo, Vec3 hi);

  Index num_nodes() const { return Index(dims.x()) * Index(dims.y()) * Index(dims.z()); }
  Index flat(int i, int j, int k) const {
    return Index(i) + Index(dims.x()) * (Index(j) + Index(dims.y()) * Index(k));
  }
  Vec3 node_world(int i, int j, int k) const {
    return origin + Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z());
  }
};

/// Trilinear sample with everything the reverse pass needs: the value, the
/// spatial Jacobian of the interpolant, and the 8 lattice nodes with their
/// weights. Outside the lattice the clamped coordinates have zero derivative.
struct FlowSample {
  Vec3 value;
  Mat3 jacobian;                   // d value / d query point
  std::array<Index, 8> corners;
  std::array<double, 8> weights;
  std::array<Vec3, 8> weight_grads;  // d weight_c / d query point
};

Vec3 sample_flow(const FlowField& field, const Vec3& p);
FlowSample sample_flow_detailed(const FlowField& field, const Vec3& p);

/// The five-stage piecewise-stationary decomposition: per-organ fields at
/// stages 0-3, one shared field at stage 4, each acting over one unit of
/// integration time (steps_per_stage * h == 1).
struct FlowStack {
  static constexpr int kStages = 5;

  std::vector<int> organs;  // sorted organ ids
  std::array<std::vector<FlowField>, 4> per_organ;  // [stage][organ position]
  FlowField shared;                                  // stage 4
  int steps_per_stage = 5;
  double h = 0.2;

  /// Zero-initialized stack whose lattices cover [lo, hi] with the given
  /// per-stage resolutions.
  static FlowStack zeros(const std::vector<int>& organs, const std::array<Vec3i, 5>& stage_dims,
                         Vec3 lo, Vec3 hi);

  /// Same shape, all lattice vectors zero (gradient / moment buffers).
  FlowStack zeros_like() const;

  Index organ_position(int organ) const;  // -1 when absent

  const FlowField& stage_field(int stage, int organ) const;
  FlowField& stage_field(int stage, int organ);

  void validate() const;
};

struct IntegrationResult {
  TriMesh final;
  std::array<TriMesh, FlowStack::kStages> intermediates;  // mesh after each stage
};

/// Forward Euler positions snapshotted before every step; snapshot
/// [stage * steps_per_stage + step] feeds the reverse pass.
struct IntegrationTape {
  std::vector<MatX3> snapshots;  // kStages*steps_per_stage + 1 entries
};

/// x <- x + h * Phi_stage(x), steps_per_stage times per stage, organ fields at
/// stages 0-3 and the shared field at stage 4. Connectivity untouched.
IntegrationResult integrate(const FlowStack& stack, const TriMesh& tmpl,
                            IntegrationTape* tape = nullptr);

/// Reverse pass: per-stage vertex gradients (dL/d positions after stage s)
/// accumulated into lattice-vector gradients, shaped like the stack.
FlowStack backprop_to_lattices(const FlowStack& stack, const TriMesh& tmpl,
                               const IntegrationTape& tape,
                               const std::array<MatX3, FlowStack::kStages>& stage_grads);

/// Minimum over lattice nodes of det(I + h * grad Phi), gradient estimated by
/// central differences on the lattice (one-sided at the border). Non-positive
/// values signal a folding Euler step.
double min_jacobian_det(const FlowField& field, double h);

// --- Serialization: one 3-channel f32 MVF per field plus a key=value
// --- manifest listing stage, organ, file and schedule.
void save_flow_stack(const FlowStack& stack, const std::string& manifest_path);
FlowStack load_flow_stack(const std::string& manifest_path);

}  // namespace meshflow
