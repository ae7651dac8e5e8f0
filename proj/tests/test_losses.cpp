#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "meshflow/losses.hpp"
#include "test_support.hpp"

using namespace meshflow;
using namespace meshflow::testing;

namespace {

FlowStack small_stack(const std::vector<int>& organs, const TriMesh& mesh, int dim = 3) {
  const Vec3 lo = mesh.vertices.colwise().minCoeff().transpose() - Vec3::Constant(0.5);
  const Vec3 hi = mesh.vertices.colwise().maxCoeff().transpose() + Vec3::Constant(0.5);
  std::array<Vec3i, 5> dims;
  dims.fill(Vec3i::Constant(dim));
  return FlowStack::zeros(organs, dims, lo, hi);
}

void randomize_stack(FlowStack& stack, double scale, std::uint64_t seed) {
  std::uint64_t counter = 0;
  const auto fill = [&](FlowField& field) {
    for (Index n = 0; n < field.num_nodes(); ++n)
      for (int c = 0; c < 3; ++c) field.data(n, c) = scale * (uniform01(seed, counter++) - 0.5);
  };
  for (int s = 0; s < 4; ++s)
    for (FlowField& f : stack.per_organ[s]) fill(f);
  fill(stack.shared);
}

double rel_err(double a, double f, double floor_val) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), floor_val});
}

}  // namespace

TEST_CASE("chamfer matches hand-computed examples") {
  // identical sets: zero value, zero gradient
  const MatX3 points = random_points(20, -1.0, 1.0, 4);
  const ChamferResult same = chamfer(points, points);
  CHECK(same.value == 0.0);
  CHECK(same.grad_pred.cwiseAbs().maxCoeff() == 0.0);

  // single pair at distance 1: value 2, gradient (4, 0, 0)
  MatX3 pred(1, 3), gt(1, 3);
  pred << 1, 0, 0;
  gt << 0, 0, 0;
  const ChamferResult pair = chamfer(pred, gt);
  CHECK(pair.value == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(pair.grad_pred(0, 0) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(pair.grad_pred(0, 1) == 0.0);

  // two predicted points straddling one target
  MatX3 pred2(2, 3), gt2(1, 3);
  pred2 << 0, 0, 0, 2, 0, 0;
  gt2 << 1, 0, 0;
  CHECK(chamfer(pred2, gt2).value == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("chamfer is symmetric, non-negative, and matches brute force") {
  const MatX3 a = random_points(150, -2.0, 2.0, 10);
  const MatX3 b = random_points(120, -2.0, 2.5, 11);
  const double ab = chamfer(a, b).value;
  const double ba = chamfer(b, a).value;
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  CHECK(ab >= 0.0);
  CHECK(ab == doctest::Approx(brute_chamfer(a, b)).epsilon(1e-12));

  CHECK_THROWS_AS(chamfer(MatX3(0, 3), b), Error);
}

TEST_CASE("chamfer gradient matches finite differences") {
  MatX3 pred = random_points(40, -1.0, 1.0, 21);
  const MatX3 gt = random_points(35, -1.1, 1.1, 22);
  const ChamferResult base = chamfer(pred, gt);

  constexpr double kEps = 1e-6;
  for (Index i = 0; i < pred.rows(); i += 7) {
    for (int c = 0; c < 3; ++c) {
      const double saved = pred(i, c);
      pred(i, c) = saved + kEps;
      const double up = chamfer(pred, gt).value;
      pred(i, c) = saved - kEps;
      const double down = chamfer(pred, gt).value;
      pred(i, c) = saved;
      const double fd = (up - down) / (2.0 * kEps);
      CHECK(rel_err(base.grad_pred(i, c), fd, 1e-4) < 1e-4);
    }
  }
}

TEST_CASE("edge loss matches hand-computed examples") {
  // all vertices coincident
  TriMesh collapsed;
  collapsed.vertices = MatX3::Zero(3, 3);
  collapsed.faces.resize(1, 3);
  collapsed.faces << 0, 1, 2;
  collapsed.organ_of_vertex = VecXi::Constant(3, 1);
  collapsed.organ_of_face = VecXi::Constant(1, 1);
  CHECK(edge_loss(collapsed).value == 0.0);

  // 3-4-5 right triangle: (9 + 25 + 16) / 3
  TriMesh tri = collapsed;
  tri.vertices << 0, 0, 0, 3, 0, 0, 0, 4, 0;
  CHECK(edge_loss(tri).value == doctest::Approx(50.0 / 3.0).epsilon(1e-15));

  // quadratic homogeneity under scaling
  TriMesh scaled = tri;
  scaled.vertices *= 2.5;
  CHECK(edge_loss(scaled).value == doctest::Approx(2.5 * 2.5 * 50.0 / 3.0).epsilon(1e-12));

  TriMesh no_faces;
  no_faces.vertices = MatX3::Zero(3, 3);
  no_faces.faces.resize(0, 3);
  no_faces.organ_of_vertex = VecXi::Constant(3, 1);
  no_faces.organ_of_face.resize(0);
  CHECK_THROWS_AS(edge_loss(no_faces), Error);
}

TEST_CASE("edge loss is rigid invariant and its gradient checks out") {
  const TriMesh mesh = random_mesh(2, 31);
  const double base = edge_loss(mesh).value;

  TriMesh moved = mesh;
  moved.vertices.rowwise() += Eigen::RowVector3d(3.0, -1.0, 2.0);
  CHECK(edge_loss(moved).value == doctest::Approx(base).epsilon(1e-12));

  const double angle = 0.73;
  Mat3 rot;
  rot = Eigen::AngleAxisd(angle, Vec3(1, 2, 3).normalized());
  TriMesh rotated = mesh;
  rotated.vertices = mesh.vertices * rot.transpose();
  CHECK(edge_loss(rotated).value == doctest::Approx(base).epsilon(1e-12));

  // finite differences on a few coordinates
  TriMesh probe = mesh;
  const EdgeLossResult res = edge_loss(mesh);
  constexpr double kEps = 1e-6;
  for (Index v = 0; v < probe.num_vertices(); v += 11) {
    for (int c = 0; c < 3; ++c) {
      const double saved = probe.vertices(v, c);
      probe.vertices(v, c) = saved + kEps;
      const double up = edge_loss(probe).value;
      probe.vertices(v, c) = saved - kEps;
      const double down = edge_loss(probe).value;
      probe.vertices(v, c) = saved;
      CHECK(rel_err(res.grad_vertices(v, c), (up - down) / (2.0 * kEps), 1e-4) < 1e-4);
    }
  }
}

TEST_CASE("total mesh loss combines stages and weights") {
  const TriMesh tmpl = star_blob(2, 1.0, Vec3::Zero(), 5);
  FlowStack stack = small_stack({1}, tmpl);
  randomize_stack(stack, 0.15, 41);
  const IntegrationResult fwd = integrate(stack, tmpl);

  TriMesh target = tmpl;
  target.vertices *= 1.1;
  const auto gt = sample_surface(target, 200, 9);

  // final-stage-only weights equal the stage-4 contribution alone
  LossWeights final_only;
  final_only.stage_weights = {0, 0, 0, 0, 1};
  const TotalLossResult lf = total_mesh_loss(fwd.intermediates, gt, final_only, 3);
  CHECK(lf.value == doctest::Approx(lf.per_stage[4].chamfer +
                                    final_only.lambda_edge * lf.per_stage[4].edge)
                        .epsilon(1e-12));

  // lambda scaling: value = chamfer + lambda * edge, stage by stage
  LossWeights uniform;
  const TotalLossResult lu = total_mesh_loss(fwd.intermediates, gt, uniform, 3);
  double expect = 0.0;
  for (int s = 0; s < 5; ++s)
    expect += lu.per_stage[size_t(s)].chamfer + 10.0 * lu.per_stage[size_t(s)].edge;
  CHECK(lu.value == doctest::Approx(expect).epsilon(1e-12));

  // identical stage meshes and gt: chamfer stays below the two-draw floor
  std::array<TriMesh, 5> stages;
  stages.fill(target);
  LossWeights no_edge;
  no_edge.lambda_edge = 0.0;
  const auto gt_dense = sample_surface(target, 2000, 1);
  const TotalLossResult self = total_mesh_loss(stages, gt_dense, no_edge, 77);
  const double bbox_sq = std::pow(
      (target.vertices.colwise().maxCoeff() - target.vertices.colwise().minCoeff()).norm(), 2);
  CHECK(self.per_stage[4].chamfer < 1e-3 * bbox_sq);
}

TEST_CASE("lattice gradient of the chained loss matches finite differences") {
  // random meshes in the 50-vertex range, full chain through Euler integration
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    const TriMesh tmpl = random_mesh(1, 100 + trial, 1.0, 0.3);  // 42 vertices
    FlowStack stack = small_stack({1}, tmpl);
    randomize_stack(stack, 0.2, 200 + trial);

    TriMesh target = random_mesh(1, 300 + trial, 1.2, 0.2);
    const auto gt = sample_surface(target, 64, 17 + trial);
    const LossWeights weights;  // lambda = 10, uniform stages

    IntegrationTape tape;
    const IntegrationResult fwd = integrate(stack, tmpl, &tape);
    const StageAssignments assignments =
        draw_stage_assignments(fwd.intermediates, gt, weights, trial);
    const TotalLossResult loss0 = eval_mesh_loss(fwd.intermediates, gt, weights, assignments);
    const FlowStack analytic = backprop_to_lattices(stack, tmpl, tape, loss0.grad_stage_vertices);

    const auto eval_at = [&](const FlowStack& s) {
      return eval_mesh_loss(integrate(s, tmpl).intermediates, gt, weights, assignments).value;
    };

    double max_abs = 0.0;
    for (int s = 0; s < 4; ++s) max_abs = std::max(max_abs, analytic.per_organ[s][0].data.cwiseAbs().maxCoeff());
    max_abs = std::max(max_abs, analytic.shared.data.cwiseAbs().maxCoeff());
    const double floor_val = 1e-4 * std::max(1.0, max_abs);

    constexpr double kEps = 1e-6;
    FlowStack probe = stack;
    double worst = 0.0;
    const auto probe_field = [&](FlowField& field, const MatX3& grad) {
      for (Index n = 0; n < field.num_nodes(); ++n) {
        for (int c = 0; c < 3; ++c) {
          const double saved = field.data(n, c);
          field.data(n, c) = saved + kEps;
          const double up = eval_at(probe);
          field.data(n, c) = saved - kEps;
          const double down = eval_at(probe);
          field.data(n, c) = saved;
          worst = std::max(worst, rel_err(grad(n, c), (up - down) / (2.0 * kEps), floor_val));
        }
      }
    };
    for (int s = 0; s < 4; ++s) probe_field(probe.per_organ[s][0], analytic.per_organ[s][0].data);
    probe_field(probe.shared, analytic.shared.data);

    CHECK(worst < 1e-4);
  }
}

TEST_CASE("loss weight validation") {
  LossWeights weights;
  weights.lambda_edge = -1.0;
  CHECK_THROWS_AS(weights.validate(), Error);
  weights.lambda_edge = 10.0;
  weights.stage_weights[2] = -0.5;
  CHECK_THROWS_AS(weights.validate(), Error);
}
