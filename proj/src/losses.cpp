#include "meshflow/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "meshflow/kdtree.hpp"
#include "meshflow/parallel.hpp"
#include "meshflow/rng.hpp"

namespace meshflow {

void LossWeights::validate() const {
  if (lambda_edge < 0.0) raise(errc::config_error, "lambda_edge must be non-negative");
  for (double w : stage_weights)
    if (w < 0.0) raise(errc::config_error, "stage weights must be non-negative");
}

ChamferResult chamfer(const MatX3& pred, const MatX3& gt) {
  if (pred.rows() == 0 || gt.rows() == 0) raise(errc::empty_set, "chamfer needs non-empty sets");

  const Index np = pred.rows(), ng = gt.rows();
  ChamferResult result;
  result.grad_pred = MatX3::Zero(np, 3);

  const KdTree pred_tree(pred);
  const KdTree gt_tree(gt);

  // term 1: ground truth -> nearest predicted, gradient on the matched points
  std::vector<Index> match_of_gt(ng);
  std::vector<double> sq_gt(ng);
  parallel_for(ng, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t u = begin; u < end; ++u)
      match_of_gt[size_t(u)] = pred_tree.nearest(gt.row(u).transpose(), &sq_gt[size_t(u)]);
  });
  double term1 = 0.0;
  for (Index u = 0; u < ng; ++u) {
    term1 += sq_gt[size_t(u)];
    const Index v = match_of_gt[size_t(u)];
    result.grad_pred.row(v) += (2.0 / double(ng)) * (pred.row(v) - gt.row(u));
  }
  term1 /= double(ng);

  // term 2: predicted -> nearest ground truth
  std::vector<Index> match_of_pred(np);
  std::vector<double> sq_pred(np);
  parallel_for(np, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t v = begin; v < end; ++v)
      match_of_pred[size_t(v)] = gt_tree.nearest(pred.row(v).transpose(), &sq_pred[size_t(v)]);
  });
  double term2 = 0.0;
  for (Index v = 0; v < np; ++v) {
    term2 += sq_pred[size_t(v)];
    result.grad_pred.row(v) += (2.0 / double(np)) * (pred.row(v) - gt.row(match_of_pred[size_t(v)]));
  }
  term2 /= double(np);

  result.value = term1 + term2;
  return result;
}

ChamferResult chamfer(const SurfaceSamples& pred, const SurfaceSamples& gt) {
  return chamfer(pred.points, gt.points);
}

EdgeLossResult edge_loss(const TriMesh& mesh) {
  const auto edges = edge_set(mesh);
  if (edges.empty()) raise(errc::no_edges, "edge loss needs a non-empty edge set");

  EdgeLossResult result;
  result.grad_vertices = MatX3::Zero(mesh.num_vertices(), 3);
  const double inv = 1.0 / double(edges.size());
  for (const auto& [i, j] : edges) {
    const Eigen::RowVector3d d = mesh.vertices.row(i) - mesh.vertices.row(j);
    result.value += d.squaredNorm();
    result.grad_vertices.row(i) += 2.0 * inv * d;
    result.grad_vertices.row(j) -= 2.0 * inv * d;
  }
  result.value *= inv;
  return result;
}

StageAssignments draw_stage_assignments(const std::array<TriMesh, FlowStack::kStages>& stage_meshes,
                                        const std::vector<SurfaceSamples>& gt_per_organ,
                                        const LossWeights& weights, std::uint64_t seed) {
  StageAssignments out;
  for (int s = 0; s < FlowStack::kStages; ++s) {
    if (weights.stage_weights[size_t(s)] == 0.0) continue;
    for (const SurfaceSamples& gt : gt_per_organ)
      out.per_stage[s].push_back(assign_samples_organ(
          stage_meshes[s], gt.organ, gt.points.rows(), hash_key(seed, std::uint64_t(s), 0xD5A6)));
  }
  return out;
}

TotalLossResult eval_mesh_loss(const std::array<TriMesh, FlowStack::kStages>& stage_meshes,
                               const std::vector<SurfaceSamples>& gt_per_organ,
                               const LossWeights& weights, const StageAssignments& assignments) {
  weights.validate();
  if (gt_per_organ.empty()) raise(errc::empty_set, "no ground-truth samples");

  TotalLossResult total;
  for (int s = 0; s < FlowStack::kStages; ++s) {
    const TriMesh& mesh = stage_meshes[s];
    total.grad_stage_vertices[s] = MatX3::Zero(mesh.num_vertices(), 3);
    const double sw = weights.stage_weights[size_t(s)];
    if (sw == 0.0) continue;

    const std::vector<int> mesh_organs = mesh.organs();
    double stage_chamfer = 0.0;
    for (const SurfaceSamples& gt : gt_per_organ) {
      if (std::find(mesh_organs.begin(), mesh_organs.end(), gt.organ) == mesh_organs.end())
        raise(errc::organ_mismatch, "stage mesh lacks organ " + std::to_string(gt.organ));
      const auto ait =
          std::find_if(assignments.per_stage[s].begin(), assignments.per_stage[s].end(),
                       [&](const SampleAssignment& a) { return a.organ == gt.organ; });
      if (ait == assignments.per_stage[s].end())
        raise(errc::organ_mismatch, "missing assignment for organ " + std::to_string(gt.organ));

      const MatX3 pred_points = realize_samples(mesh, *ait);
      ChamferResult ch = chamfer(pred_points, gt.points);
      stage_chamfer += ch.value;
      ch.grad_pred *= sw;
      scatter_sample_gradient(mesh, *ait, ch.grad_pred, total.grad_stage_vertices[s]);
    }

    EdgeLossResult el = edge_loss(mesh);
    total.per_stage[size_t(s)] = {stage_chamfer, el.value};
    total.value += sw * (stage_chamfer + weights.lambda_edge * el.value);
    total.grad_stage_vertices[s] += (sw * weights.lambda_edge) * el.grad_vertices;
  }
  return total;
}

TotalLossResult total_mesh_loss(const std::array<TriMesh, FlowStack::kStages>& stage_meshes,
                                const std::vector<SurfaceSamples>& gt_per_organ,
                                const LossWeights& weights, std::uint64_t seed) {
  return eval_mesh_loss(stage_meshes, gt_per_organ, weights,
                        draw_stage_assignments(stage_meshes, gt_per_organ, weights, seed));
}

MeshLossGrad fit_loss_and_grad(const FlowStack& stack, const TriMesh& tmpl,
                               const std::vector<SurfaceSamples>& gt_per_organ,
                               const LossWeights& weights, std::uint64_t seed,
                               const StageAssignments* fixed) {
  IntegrationTape tape;
  const IntegrationResult integrated = integrate(stack, tmpl, &tape);

  MeshLossGrad out;
  if (fixed) {
    out.loss = eval_mesh_loss(integrated.intermediates, gt_per_organ, weights, *fixed);
  } else {
    out.loss = total_mesh_loss(integrated.intermediates, gt_per_organ, weights, seed);
  }
  out.lattice_grad = backprop_to_lattices(stack, tmpl, tape, out.loss.grad_stage_vertices);
  return out;
}

}  // namespace meshflow
