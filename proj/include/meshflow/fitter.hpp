#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "meshflow/flow.hpp"
#include "meshflow/losses.hpp"
#include "meshflow/trimesh.hpp"
#include "meshflow/voxel_grid.hpp"

namespace meshflow {

struct FitConfig {
  int max_iters = 500;
  double lr = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int samples_per_organ = 5000;

  // Coarse-to-fine: iteration at which stage i becomes trainable. Empty means
  // the default schedule i * (max_iters / 10).
  std::vector<int> unfreeze_iters;

  double conv_rel_change = 1e-5;
  int conv_window = 20;
  int plateau_patience = 50;
  double grad_clip = 10.0;

  std::array<int, 4> stage_dims {8, 16, 32, 64};  // stages 0-3, cubic lattices
  int final_stage_dim = 64;  // used when no image grid defines the resolution
  double extent_margin = 0.10;  // bbox margin when no image grid defines the extent

  int checkpoint_every = 0;  // 0 disables checkpoint manifests
  std::string checkpoint_dir;

  std::vector<int> effective_unfreeze() const;
  void validate() const;
};

struct TraceRow {
  int iteration = 0;
  int stage = 0;
  double chamfer = 0.0;
  double edge = 0.0;
  double total = 0.0;
};

struct FitResult {
  FlowStack stack;      // best-loss iterate
  TriMesh fitted;       // template integrated through `stack`
  std::vector<TraceRow> trace;
  double best_loss = 0.0;
  int best_iter = 0;
  int iters_run = 0;
  bool non_finite_abort = false;
};

using FitTarget = std::variant<TriMesh, VoxelGrid>;

/// Per-case variational fit: Adam on zero-initialized lattice vectors, driven
/// by the deep-supervision mesh loss chained through Euler integration.
/// Deterministic for a fixed seed. Runs a finite-difference gradient self-check
/// first and throws Error(gradient_check_failed) when it fails.
FitResult fit(const TriMesh& tmpl, const FitTarget& target, const FitConfig& cfg,
              const LossWeights& weights);

/// The built-in self-check on a small synthetic problem: max relative error of
/// analytic lattice gradients against central differences.
double gradient_check_max_rel_error();

struct FitCase {
  std::string id;
  TriMesh tmpl;
  FitTarget target;
};

struct AblationRow {
  std::string case_id;
  bool dms = false;
  double assd = 0.0;
  double sif = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // one per (case, arm)
  double median_assd_dms_on = 0.0, median_assd_dms_off = 0.0;
  double median_sif_dms_on = 0.0, median_sif_dms_off = 0.0;
};

/// Fit every case twice: uniform stage weights (deep mesh supervision on)
/// versus final-stage-only weights (off); reports per-case and median ASSD/SIF
/// per arm.
AblationReport ablate_dms(const std::vector<FitCase>& suite, const FitConfig& cfg,
                          const LossWeights& weights);

void save_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

}  // namespace meshflow
