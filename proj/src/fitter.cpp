#include "meshflow/fitter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>

#include "meshflow/marching_cubes.hpp"
#include "meshflow/metrics.hpp"
#include "meshflow/rng.hpp"

namespace meshflow {

std::vector<int> FitConfig::effective_unfreeze() const {
  if (!unfreeze_iters.empty()) {
    if (unfreeze_iters.size() != FlowStack::kStages)
      raise(errc::config_error, "unfreeze schedule needs one entry per stage");
    for (size_t s = 1; s < unfreeze_iters.size(); ++s)
      if (unfreeze_iters[s] < unfreeze_iters[s - 1])
        raise(errc::config_error, "unfreeze schedule must be non-decreasing");
    return unfreeze_iters;
  }
  std::vector<int> schedule(FlowStack::kStages);
  for (int s = 0; s < FlowStack::kStages; ++s) schedule[s] = s * (max_iters / 10);
  return schedule;
}

void FitConfig::validate() const {
  if (max_iters < 1) raise(errc::config_error, "max_iters must be positive");
  if (!(lr > 0.0)) raise(errc::config_error, "lr must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
    raise(errc::config_error, "adam betas must lie in (0, 1)");
  if (samples_per_organ < 1) raise(errc::config_error, "samples_per_organ must be positive");
  for (int d : stage_dims)
    if (d < 2) raise(errc::config_error, "stage lattice dims must be >= 2");
  if (final_stage_dim < 2) raise(errc::config_error, "final stage dim must be >= 2");
  effective_unfreeze();
}

namespace {

struct NormalizedTarget {
  TriMesh mesh;
  Vec3 lo, hi;       // lattice extent
  Vec3i final_dims;  // stage-4 lattice resolution
};

NormalizedTarget normalize_target(const TriMesh& tmpl, const FitTarget& target,
                                  const FitConfig& cfg) {
  NormalizedTarget out;
  if (std::holds_alternative<VoxelGrid>(target)) {
    const VoxelGrid& grid = std::get<VoxelGrid>(target);
    if (grid.kind != GridKind::label)
      raise(errc::shape_mismatch, "volume targets must be label grids");
    grid.validate();
    bool first = true;
    for (int cls : grid.present_labels()) {
      if (cls == 0) continue;
      TriMesh surf = marching_cubes(class_indicator(grid, cls), 0.5, cls);
      if (first) {
        out.mesh = std::move(surf);
        first = false;
      } else {
        append_mesh(out.mesh, surf);
      }
    }
    if (first) raise(errc::empty_organ, "label volume has no foreground class");
    out.lo = grid.origin;
    out.hi = grid.origin + (grid.dims - Vec3i::Ones()).cast<double>().cwiseProduct(grid.spacing);
    out.final_dims = grid.dims;
  } else {
    out.mesh = std::get<TriMesh>(target);
    out.mesh.validate();
    for (int organ : out.mesh.organs()) {
      if (!is_closed(out.mesh.organ_submesh(organ)))
        raise(errc::open_surface, "target organ " + std::to_string(organ) + " is not watertight");
    }
    Vec3 lo = tmpl.vertices.colwise().minCoeff().transpose();
    Vec3 hi = tmpl.vertices.colwise().maxCoeff().transpose();
    lo = lo.cwiseMin(out.mesh.vertices.colwise().minCoeff().transpose());
    hi = hi.cwiseMax(out.mesh.vertices.colwise().maxCoeff().transpose());
    const Vec3 margin = cfg.extent_margin * (hi - lo);
    out.lo = lo - margin;
    out.hi = hi + margin;
    out.final_dims = Vec3i::Constant(cfg.final_stage_dim);
  }
  return out;
}

bool grads_finite(const FlowStack& grad) {
  for (int s = 0; s < 4; ++s)
    for (const FlowField& f : grad.per_organ[s])
      if (!f.data.allFinite()) return false;
  return grad.shared.data.allFinite();
}

// One Adam step on a single lattice, gradient clipped at cfg.grad_clip.
void adam_update(const FitConfig& cfg, double lr, long t, MatX3& theta, const MatX3& grad_in,
                 MatX3& m, MatX3& v) {
  MatX3 grad = grad_in;
  const double norm = grad.norm();
  if (norm > cfg.grad_clip) grad *= cfg.grad_clip / norm;

  m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
  v.array() = cfg.adam_beta2 * v.array() + (1.0 - cfg.adam_beta2) * grad.array().square();
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, double(t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, double(t));
  theta.array() -=
      lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_eps);
}

// The built-in check problem: a slightly perturbed 20-vertex torus deformed by
// a random small 5-stage stack against samples of a scaled copy of itself.
struct CheckProblem {
  TriMesh mesh;
  FlowStack stack;
  std::vector<SurfaceSamples> gt;
  LossWeights weights;
};

TriMesh make_check_torus(std::uint64_t seed) {
  constexpr int kMinor = 4, kMajor = 5;
  constexpr double kR = 1.0, kr = 0.45;
  TriMesh mesh;
  mesh.vertices.resize(kMinor * kMajor, 3);
  for (int j = 0; j < kMajor; ++j) {
    for (int i = 0; i < kMinor; ++i) {
      const double u = 2.0 * 3.14159265358979323846 * i / kMinor;
      const double w = 2.0 * 3.14159265358979323846 * j / kMajor;
      const Index v = Index(j) * kMinor + i;
      mesh.vertices.row(v) << (kR + kr * std::cos(u)) * std::cos(w),
          (kR + kr * std::cos(u)) * std::sin(w), kr * std::sin(u);
      for (int c = 0; c < 3; ++c)
        mesh.vertices(v, c) += 0.08 * (uniform01(seed, std::uint64_t(v), std::uint64_t(c)) - 0.5);
    }
  }
  mesh.faces.resize(2 * kMinor * kMajor, 3);
  Index f = 0;
  for (int j = 0; j < kMajor; ++j) {
    for (int i = 0; i < kMinor; ++i) {
      const int v00 = j * kMinor + i;
      const int v10 = j * kMinor + (i + 1) % kMinor;
      const int v01 = ((j + 1) % kMajor) * kMinor + i;
      const int v11 = ((j + 1) % kMajor) * kMinor + (i + 1) % kMinor;
      mesh.faces.row(f++) << v00, v10, v11;
      mesh.faces.row(f++) << v00, v11, v01;
    }
  }
  mesh.organ_of_vertex = VecXi::Constant(mesh.num_vertices(), 1);
  mesh.organ_of_face = VecXi::Constant(mesh.num_faces(), 1);
  return mesh;
}

CheckProblem make_check_problem() {
  CheckProblem problem;
  problem.mesh = make_check_torus(7);

  const Vec3 lo = problem.mesh.vertices.colwise().minCoeff().transpose() - Vec3::Constant(0.4);
  const Vec3 hi = problem.mesh.vertices.colwise().maxCoeff().transpose() + Vec3::Constant(0.4);
  std::array<Vec3i, 5> dims;
  dims.fill(Vec3i::Constant(3));
  problem.stack = FlowStack::zeros({1}, dims, lo, hi);
  std::uint64_t counter = 0;
  const auto randomize = [&](FlowField& field) {
    for (Index node = 0; node < field.num_nodes(); ++node)
      for (int c = 0; c < 3; ++c)
        field.data(node, c) = 0.10 * (uniform01(11, counter++, std::uint64_t(c)) - 0.5);
  };
  for (int s = 0; s < 4; ++s)
    for (FlowField& f : problem.stack.per_organ[s]) randomize(f);
  randomize(problem.stack.shared);

  TriMesh target = problem.mesh;
  target.vertices *= 1.15;
  problem.gt = sample_surface(target, 48, 23);
  return problem;
}

}  // namespace

double gradient_check_max_rel_error() {
  const CheckProblem problem = make_check_problem();

  // analytic gradient and the frozen assignments it differentiates
  IntegrationTape tape;
  const IntegrationResult fwd = integrate(problem.stack, problem.mesh, &tape);
  const StageAssignments assignments =
      draw_stage_assignments(fwd.intermediates, problem.gt, problem.weights, 5);
  const TotalLossResult loss0 =
      eval_mesh_loss(fwd.intermediates, problem.gt, problem.weights, assignments);
  const FlowStack analytic =
      backprop_to_lattices(problem.stack, problem.mesh, tape, loss0.grad_stage_vertices);

  const auto eval_at = [&](const FlowStack& stack) {
    const IntegrationResult r = integrate(stack, problem.mesh, nullptr);
    return eval_mesh_loss(r.intermediates, problem.gt, problem.weights, assignments).value;
  };

  double max_abs = 0.0;
  const auto fields_of = [](const FlowStack& s) {
    std::vector<const FlowField*> out;
    for (int st = 0; st < 4; ++st)
      for (const FlowField& f : s.per_organ[st]) out.push_back(&f);
    out.push_back(&s.shared);
    return out;
  };
  for (const FlowField* f : fields_of(analytic)) max_abs = std::max(max_abs, f->data.cwiseAbs().maxCoeff());
  const double floor = 1e-4 * std::max(1.0, max_abs);

  constexpr double kEps = 1e-6;
  double worst = 0.0;
  FlowStack probe = problem.stack;
  std::vector<FlowField*> probe_fields;
  for (int st = 0; st < 4; ++st)
    for (FlowField& f : probe.per_organ[st]) probe_fields.push_back(&f);
  probe_fields.push_back(&probe.shared);
  const auto analytic_fields = fields_of(analytic);

  for (size_t fi = 0; fi < probe_fields.size(); ++fi) {
    FlowField& field = *probe_fields[fi];
    const MatX3& grad = analytic_fields[fi]->data;
    for (Index node = 0; node < field.num_nodes(); ++node) {
      for (int c = 0; c < 3; ++c) {
        const double saved = field.data(node, c);
        field.data(node, c) = saved + kEps;
        const double up = eval_at(probe);
        field.data(node, c) = saved - kEps;
        const double down = eval_at(probe);
        field.data(node, c) = saved;
        const double fd = (up - down) / (2.0 * kEps);
        const double a = grad(node, c);
        const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

namespace {

double cached_gradient_check() {
  static std::once_flag flag;
  static double value = 0.0;
  std::call_once(flag, [] { value = gradient_check_max_rel_error(); });
  return value;
}

}  // namespace

FitResult fit(const TriMesh& tmpl, const FitTarget& target, const FitConfig& cfg,
              const LossWeights& weights) {
  cfg.validate();
  weights.validate();
  tmpl.validate();

  const double check = cached_gradient_check();
  if (check >= 1e-3)
    raise(errc::gradient_check_failed,
          "lattice gradient check failed with max relative error " + std::to_string(check));

  const NormalizedTarget norm = normalize_target(tmpl, target, cfg);
  const std::vector<int> organs = tmpl.organs();
  if (organs != norm.mesh.organs())
    raise(errc::organ_mismatch, "template and target organ sets differ");

  std::array<Vec3i, 5> dims;
  for (int s = 0; s < 4; ++s) dims[s] = Vec3i::Constant(cfg.stage_dims[size_t(s)]);
  dims[4] = norm.final_dims;

  FlowStack stack = FlowStack::zeros(organs, dims, norm.lo, norm.hi);
  FlowStack moment1 = stack.zeros_like();
  FlowStack moment2 = stack.zeros_like();
  std::array<long, FlowStack::kStages> step_count {};

  const std::vector<int> unfreeze = cfg.effective_unfreeze();
  double lr = cfg.lr;

  FitResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  result.stack = stack;
  int since_best = 0;
  std::vector<double> loss_history;
  loss_history.reserve(cfg.max_iters);

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    result.iters_run = iter + 1;
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
        iter % cfg.checkpoint_every == 0)
      save_flow_stack(stack, cfg.checkpoint_dir + "/checkpoint_" + std::to_string(iter) +
                                 ".mfstack");
    const std::vector<SurfaceSamples> gt = sample_surface(
        norm.mesh, cfg.samples_per_organ, hash_key(cfg.seed, std::uint64_t(iter), 0x67EE));
    const MeshLossGrad eval = fit_loss_and_grad(stack, tmpl, gt, weights,
                                                hash_key(cfg.seed, std::uint64_t(iter), 0x9E0D));

    // trace: one row per iteration; stage = deepest unfrozen stage
    int active_stage = 0;
    for (int s = 0; s < FlowStack::kStages; ++s)
      if (iter >= unfreeze[size_t(s)]) active_stage = s;
    TraceRow row;
    row.iteration = iter;
    row.stage = active_stage;
    for (int s = 0; s < FlowStack::kStages; ++s) {
      row.chamfer += weights.stage_weights[size_t(s)] * eval.loss.per_stage[size_t(s)].chamfer;
      row.edge += weights.stage_weights[size_t(s)] * eval.loss.per_stage[size_t(s)].edge;
    }
    row.total = eval.loss.value;
    result.trace.push_back(row);

    if (!std::isfinite(eval.loss.value) || !grads_finite(eval.lattice_grad)) {
      result.non_finite_abort = true;
      break;
    }

    if (eval.loss.value < result.best_loss) {
      result.best_loss = eval.loss.value;
      result.best_iter = iter;
      result.stack = stack;
      since_best = 0;
    } else if (++since_best >= cfg.plateau_patience) {
      lr *= 0.5;
      since_best = 0;
    }

    loss_history.push_back(eval.loss.value);
    if (iter >= cfg.conv_window) {
      const double prev = loss_history[size_t(iter - cfg.conv_window)];
      if (std::abs(eval.loss.value - prev) / std::max(std::abs(prev), 1e-12) < cfg.conv_rel_change)
        break;
    }

    for (int s = 0; s < FlowStack::kStages; ++s) {
      if (iter < unfreeze[size_t(s)]) continue;
      ++step_count[size_t(s)];
      if (s < 4) {
        for (size_t o = 0; o < organs.size(); ++o)
          adam_update(cfg, lr, step_count[size_t(s)], stack.per_organ[s][o].data,
                      eval.lattice_grad.per_organ[s][o].data, moment1.per_organ[s][o].data,
                      moment2.per_organ[s][o].data);
      } else {
        adam_update(cfg, lr, step_count[size_t(s)], stack.shared.data,
                    eval.lattice_grad.shared.data, moment1.shared.data, moment2.shared.data);
      }
    }
  }

  result.fitted = integrate(result.stack, tmpl, nullptr).final;
  return result;
}

AblationReport ablate_dms(const std::vector<FitCase>& suite, const FitConfig& cfg,
                          const LossWeights& weights) {
  if (suite.empty()) raise(errc::config_error, "ablation needs at least one case");

  AblationReport report;
  const auto run_arm = [&](const FitCase& fit_case, bool dms) {
    LossWeights arm = weights;
    if (dms) {
      arm.stage_weights = {1.0, 1.0, 1.0, 1.0, 1.0};
    } else {
      arm.stage_weights = {0.0, 0.0, 0.0, 0.0, 1.0};
    }
    const FitResult fitted = fit(fit_case.tmpl, fit_case.target, cfg, arm);

    TriMesh target_mesh;
    if (std::holds_alternative<TriMesh>(fit_case.target)) {
      target_mesh = std::get<TriMesh>(fit_case.target);
    } else {
      const VoxelGrid& grid = std::get<VoxelGrid>(fit_case.target);
      bool first = true;
      for (int cls : grid.present_labels()) {
        if (cls == 0) continue;
        TriMesh surf = marching_cubes(class_indicator(grid, cls), 0.5, cls);
        if (first) { target_mesh = std::move(surf); first = false; }
        else append_mesh(target_mesh, surf);
      }
    }

    AblationRow row;
    row.case_id = fit_case.id;
    row.dms = dms;
    row.assd = assd(fitted.fitted, target_mesh, 20000, cfg.seed);
    row.sif = sif_percent(fitted.fitted);
    report.rows.push_back(row);
  };

  for (const FitCase& fit_case : suite) {
    run_arm(fit_case, true);
    run_arm(fit_case, false);
  }

  const auto median_of = [&](bool dms, bool use_assd) {
    std::vector<double> values;
    for (const AblationRow& row : report.rows)
      if (row.dms == dms) values.push_back(use_assd ? row.assd : row.sif);
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  };
  report.median_assd_dms_on = median_of(true, true);
  report.median_assd_dms_off = median_of(false, true);
  report.median_sif_dms_on = median_of(true, false);
  report.median_sif_dms_off = median_of(false, false);
  return report;
}

void save_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(errc::io_error, "cannot open " + path + " for writing");
  out << "iteration,stage,chamfer,edge,total\n";
  char buf[160];
  for (const TraceRow& row : trace) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g\n", row.iteration, row.stage,
                  row.chamfer, row.edge, row.total);
    out << buf;
  }
  if (!out) raise(errc::io_error, "write failed: " + path);
}

}  // namespace meshflow
