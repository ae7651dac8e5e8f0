#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "meshflow/flow.hpp"
#include "meshflow/trimesh.hpp"

namespace meshflow {

struct LossWeights {
  double lambda_edge = 10.0;
  std::array<double, FlowStack::kStages> stage_weights {1.0, 1.0, 1.0, 1.0, 1.0};

  void validate() const;
};

struct ChamferResult {
  double value = 0.0;
  MatX3 grad_pred;  // d value / d predicted points
};

/// Symmetric mean squared nearest-neighbor distance between point sets
/// (gradient through the argmin matches, lowest index on ties, exact
/// neighbors via kd-tree).
ChamferResult chamfer(const MatX3& pred, const MatX3& gt);
ChamferResult chamfer(const SurfaceSamples& pred, const SurfaceSamples& gt);

struct EdgeLossResult {
  double value = 0.0;
  MatX3 grad_vertices;
};

/// Mean squared edge length over the unique undirected edges.
EdgeLossResult edge_loss(const TriMesh& mesh);

struct StageLossBreakdown {
  double chamfer = 0.0;
  double edge = 0.0;
};

struct TotalLossResult {
  double value = 0.0;
  std::array<StageLossBreakdown, FlowStack::kStages> per_stage {};
  std::array<MatX3, FlowStack::kStages> grad_stage_vertices;
};

/// Per-stage predicted-sample assignments. Holding these fixed makes the
/// objective a smooth function of the lattice vectors, which is what the
/// analytic gradient differentiates and what finite differences must probe.
struct StageAssignments {
  std::array<std::vector<SampleAssignment>, FlowStack::kStages> per_stage;
};

/// Assignments for every gt organ on every positively weighted stage, budget
/// matching the gt sample count, stage-keyed seed.
StageAssignments draw_stage_assignments(const std::array<TriMesh, FlowStack::kStages>& stage_meshes,
                                        const std::vector<SurfaceSamples>& gt_per_organ,
                                        const LossWeights& weights, std::uint64_t seed);

/// Deep-mesh-supervision objective under fixed assignments: sum over stages of
/// stage_weight * (sum over organs of Chamfer + lambda * edge loss).
TotalLossResult eval_mesh_loss(const std::array<TriMesh, FlowStack::kStages>& stage_meshes,
                               const std::vector<SurfaceSamples>& gt_per_organ,
                               const LossWeights& weights, const StageAssignments& assignments);

/// draw_stage_assignments + eval_mesh_loss: predicted samples of stage s are
/// re-drawn from its current mesh under hash(seed, s).
TotalLossResult total_mesh_loss(const std::array<TriMesh, FlowStack::kStages>& stage_meshes,
                                const std::vector<SurfaceSamples>& gt_per_organ,
                                const LossWeights& weights, std::uint64_t seed);

/// Integrate, evaluate, and chain the loss gradient into the lattice vectors.
/// When `fixed` is given its assignments are reused (gradient-check mode);
/// otherwise fresh ones are drawn from the stage meshes under `seed`.
struct MeshLossGrad {
  TotalLossResult loss;
  FlowStack lattice_grad;
};
MeshLossGrad fit_loss_and_grad(const FlowStack& stack, const TriMesh& tmpl,
                               const std::vector<SurfaceSamples>& gt_per_organ,
                               const LossWeights& weights, std::uint64_t seed,
                               const StageAssignments* fixed = nullptr);

}  // namespace meshflow
