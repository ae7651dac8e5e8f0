#include "meshflow/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "meshflow/fitter.hpp"
#include "meshflow/marching_cubes.hpp"
#include "meshflow/metrics.hpp"
#include "meshflow/parallel.hpp"
#include "meshflow/registration.hpp"
#include "meshflow/template_builder.hpp"
#include "meshflow/voxelize.hpp"

namespace meshflow {

namespace {

int exit_code_for(errc code) {
  switch (code) {
    case errc::io_error:
      return kExitIo;
    case errc::topology_error:
    case errc::open_surface:
    case errc::empty_surface:
    case errc::empty_organ:
    case errc::zero_area:
    case errc::empty_mesh:
    case errc::degenerate_source:
    case errc::singular_system:
    case errc::degenerate_grid:
      return kExitTopology;
    case errc::non_finite_loss:
      return kExitNonFinite;
    default:
      return kExitConfig;
  }
}

bool ends_with(const std::string& value, const std::string& suffix) {
  return value.size() >= suffix.size() &&
         value.compare(value.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

// fit config file: flat key=value overrides of FitConfig / LossWeights
void apply_fit_config(const std::map<std::string, std::string>& kv, FitConfig& cfg,
                      LossWeights& weights) {
  for (const auto& [key, value] : kv) {
    try {
      if (value.empty()) raise(errc::config_error, "config key '" + key + "' has no value");
      if (key == "max_iters") cfg.max_iters = std::stoi(value);
      else if (key == "lr") cfg.lr = std::stod(value);
      else if (key == "adam_beta1") cfg.adam_beta1 = std::stod(value);
      else if (key == "adam_beta2") cfg.adam_beta2 = std::stod(value);
      else if (key == "adam_eps") cfg.adam_eps = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "samples_per_organ") cfg.samples_per_organ = std::stoi(value);
      else if (key == "conv_rel_change") cfg.conv_rel_change = std::stod(value);
      else if (key == "conv_window") cfg.conv_window = std::stoi(value);
      else if (key == "plateau_patience") cfg.plateau_patience = std::stoi(value);
      else if (key == "grad_clip") cfg.grad_clip = std::stod(value);
      else if (key == "final_stage_dim") cfg.final_stage_dim = std::stoi(value);
      else if (key == "extent_margin") cfg.extent_margin = std::stod(value);
      else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(value);
      else if (key == "lambda_edge") weights.lambda_edge = std::stod(value);
      else if (key == "unfreeze_iters") {
        cfg.unfreeze_iters.clear();
        for (double v : parse_list(value)) cfg.unfreeze_iters.push_back(int(v));
      } else if (key == "stage_dims") {
        const auto list = parse_list(value);
        if (list.size() != 4) raise(errc::config_error, "stage_dims needs 4 entries");
        for (int s = 0; s < 4; ++s) cfg.stage_dims[size_t(s)] = int(list[size_t(s)]);
      } else if (key == "stage_weights") {
        const auto list = parse_list(value);
        if (list.size() != FlowStack::kStages)
          raise(errc::config_error, "stage_weights needs 5 entries");
        for (int s = 0; s < FlowStack::kStages; ++s) weights.stage_weights[size_t(s)] = list[size_t(s)];
      } else {
        raise(errc::config_error, "unknown config key '" + key + "'");
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      raise(errc::config_error, "bad value for config key '" + key + "'");
    }
  }
}

std::vector<std::pair<int, std::string>> default_organ_names(const std::vector<int>& organs) {
  const std::map<int, std::string> known {
      {1, "liver"}, {2, "kidneys"}, {3, "spleen"}, {4, "pancreas"}};
  std::vector<std::pair<int, std::string>> names;
  for (int organ : organs) {
    const auto it = known.find(organ);
    names.emplace_back(organ, it != known.end() ? it->second : "organ_" + std::to_string(organ));
  }
  return names;
}

int cmd_template(const std::vector<std::string>& inputs, double threshold, int smooth_steps,
                 const std::string& out_path, const std::string& names_path) {
  std::vector<VoxelGrid> labels;
  labels.reserve(inputs.size());
  for (const std::string& path : inputs) labels.push_back(load_mvf(path));
  for (size_t i = 1; i < labels.size(); ++i)
    if (!labels[i].same_extent(labels[0])) raise(errc::shape_mismatch, "dims mismatch");

  const TriMesh tmpl = build_template(labels, threshold, smooth_steps);
  save_obj(tmpl, out_path);
  if (!names_path.empty()) save_organ_names(default_organ_names(tmpl.organs()), names_path);
  std::cout << "template: " << tmpl.num_vertices() << " vertices, " << tmpl.num_faces()
            << " faces, " << tmpl.organs().size() << " organ(s)\n";
  return kExitOk;
}

int cmd_mc(const std::string& input, double iso, int organ, const std::string& out_path) {
  const VoxelGrid grid = load_mvf(input);
  const TriMesh mesh = marching_cubes(grid, iso, organ);
  save_obj(mesh, out_path);
  std::cout << "surface: " << mesh.num_vertices() << " vertices, " << mesh.num_faces()
            << " faces\n";
  return kExitOk;
}

int cmd_voxelize(const std::string& mesh_path, const std::string& reference_path,
                 const std::string& out_path) {
  const TriMesh mesh = load_obj(mesh_path);
  const VoxelGrid reference = load_mvf(reference_path);
  save_mvf(voxelize(mesh, reference), out_path);
  return kExitOk;
}

int cmd_fit(const std::string& template_path, const std::string& target_path,
            const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_override) {
  FitConfig cfg;
  LossWeights weights;
  if (!config_path.empty()) apply_fit_config(load_config(config_path), cfg, weights);
  if (seed_override) cfg.seed = *seed_override;

  const TriMesh tmpl = load_obj(template_path);
  FitTarget target;
  std::optional<VoxelGrid> target_labels;
  if (ends_with(target_path, ".mvf")) {
    target_labels = load_mvf(target_path);
    target = *target_labels;
  } else {
    target = load_obj(target_path);
  }

  std::filesystem::create_directories(out_dir);
  if (cfg.checkpoint_every > 0 && cfg.checkpoint_dir.empty()) cfg.checkpoint_dir = out_dir;

  const FitResult result = fit(tmpl, target, cfg, weights);
  save_obj(result.fitted, out_dir + "/fitted.obj");
  save_flow_stack(result.stack, out_dir + "/flow.mfstack");
  save_trace_csv(result.trace, out_dir + "/trace.csv");
  std::cout << "fit: best loss " << result.best_loss << " at iteration " << result.best_iter
            << " (" << result.iters_run << " iterations run)\n";

  if (target_labels) {
    const MetricReport report =
        evaluate_mesh(result.fitted, std::nullopt, target_labels, 50000, cfg.seed);
    std::cout << format_metrics_text(report);

    // voxel-space cross entropy of the rasterized fit, reported as a diagnostic
    const VoxelGrid fitted_vox = voxelize(result.fitted, *target_labels);
    int num_classes = 0;
    for (std::uint8_t v : target_labels->labels) num_classes = std::max(num_classes, int(v) + 1);
    for (std::uint8_t v : fitted_vox.labels) num_classes = std::max(num_classes, int(v) + 1);
    VoxelGrid logits = VoxelGrid::make_prob(fitted_vox.dims, num_classes, fitted_vox.spacing,
                                            fitted_vox.origin);
    for (Index i = 0; i < fitted_vox.num_voxels(); ++i)
      logits.values[size_t(i) * num_classes + fitted_vox.labels[size_t(i)]] = 10.0f;
    std::cout << "cross_entropy(one-hot rasterized fit, target labels) = "
              << cross_entropy(logits, *target_labels) << "\n";
  }
  if (result.non_finite_abort) raise(errc::non_finite_loss, "fit aborted on non-finite loss");
  return kExitOk;
}

int cmd_metrics(const std::string& pred_path, const std::string& gt_path, Index n_samples,
                std::uint64_t seed, const std::string& csv_path) {
  const TriMesh pred = load_obj(pred_path);
  std::optional<TriMesh> gt_mesh;
  std::optional<VoxelGrid> gt_labels;
  if (ends_with(gt_path, ".mvf")) gt_labels = load_mvf(gt_path);
  else gt_mesh = load_obj(gt_path);

  const MetricReport report = evaluate_mesh(pred, gt_mesh, gt_labels, n_samples, seed);
  std::cout << format_metrics_text(report);
  if (!csv_path.empty()) save_metrics_csv(report, csv_path);
  return kExitOk;
}

int cmd_register(const std::string& mesh_path, const std::string& seg_path,
                 const std::string& mode_name, Index n_samples, std::uint64_t seed,
                 const std::string& out_path, const std::string& summary_path) {
  const TriMesh pred = load_obj(mesh_path);
  const VoxelGrid seg = load_mvf(seg_path);
  const AlignMode mode = mode_name == "rigid" ? AlignMode::rigid : AlignMode::nonrigid;

  const AlignResult result = align_to_voxels(pred, seg, mode, n_samples, seed);
  save_obj(result.aligned, out_path);

  nlohmann::json summary;
  summary["mode"] = mode_name;
  for (size_t i = 0; i < result.organs.size(); ++i) {
    nlohmann::json organ;
    organ["organ"] = result.organs[i];
    organ["pre_assd_mm"] = result.pre_assd[i];
    organ["post_assd_mm"] = result.post_assd[i];
    if (mode == AlignMode::rigid) {
      const RigidTransform& rt = result.transforms[i];
      organ["rotation"] = {rt.rotation(0, 0), rt.rotation(0, 1), rt.rotation(0, 2),
                           rt.rotation(1, 0), rt.rotation(1, 1), rt.rotation(1, 2),
                           rt.rotation(2, 0), rt.rotation(2, 1), rt.rotation(2, 2)};
      organ["translation"] = {rt.translation.x(), rt.translation.y(), rt.translation.z()};
    }
    summary["organs"].push_back(organ);
  }
  const std::string text = summary.dump(2);
  std::cout << text << "\n";
  if (!summary_path.empty()) {
    std::ofstream out(summary_path);
    if (!out) raise(errc::io_error, "cannot open " + summary_path + " for writing");
    out << text << "\n";
  }
  return kExitOk;
}

}  // namespace

std::map<std::string, std::string> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(errc::io_error, "cannot open config " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) raise(errc::config_error, "malformed config line: " + line);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
  }
  return kv;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app {"meshflow: template-based diffeomorphic multi-organ mesh extraction"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: MESHFLOW_THREADS or 1)");

  // template
  auto* tpl = app.add_subcommand("template", "build an occupancy template from label volumes");
  std::vector<std::string> tpl_inputs;
  double tpl_threshold = 0.30;
  int tpl_smooth = 20;
  std::string tpl_out = "template.obj", tpl_names;
  tpl->add_option("labels", tpl_inputs, "input label volumes (MVF)")->required();
  tpl->add_option("--threshold", tpl_threshold, "occupancy threshold in (0,1]");
  tpl->add_option("--smooth-steps", tpl_smooth, "HC smoothing steps");
  tpl->add_option("-o,--output", tpl_out, "output OBJ");
  tpl->add_option("--names", tpl_names, "write organ-name sidecar here");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit the template to a target mesh or label volume");
  std::string fit_template, fit_target, fit_config, fit_out = "fit_out";
  std::uint64_t fit_seed = 0;
  bool fit_seed_set = false;
  fit_cmd->add_option("template", fit_template, "template OBJ")->required();
  fit_cmd->add_option("target", fit_target, "target OBJ or label MVF")->required();
  fit_cmd->add_option("--config", fit_config, "key=value config file");
  fit_cmd->add_option("-o,--output", fit_out, "output directory");
  fit_cmd->add_option("--seed", fit_seed, "seed override")->each([&](const std::string&) {
    fit_seed_set = true;
  });

  // metrics
  auto* met = app.add_subcommand("metrics", "evaluate a predicted mesh");
  std::string met_pred, met_gt, met_csv;
  Index met_samples = 50000;
  std::uint64_t met_seed = 0;
  met->add_option("pred", met_pred, "predicted OBJ")->required();
  met->add_option("gt", met_gt, "ground truth OBJ or label MVF")->required();
  met->add_option("--samples", met_samples, "surface samples per organ");
  met->add_option("--seed", met_seed, "sampling seed");
  met->add_option("-o,--csv", met_csv, "also write CSV here");

  // register
  auto* reg = app.add_subcommand("register", "align a mesh to a voxel segmentation");
  std::string reg_mesh, reg_seg, reg_mode = "rigid", reg_out = "aligned.obj", reg_summary;
  Index reg_samples = 50000;
  std::uint64_t reg_seed = 0;
  reg->add_option("mesh", reg_mesh, "mesh OBJ")->required();
  reg->add_option("seg", reg_seg, "segmentation MVF")->required();
  reg->add_option("--mode", reg_mode, "rigid|nonrigid")
      ->check(CLI::IsMember({"rigid", "nonrigid"}));
  reg->add_option("--samples", reg_samples, "surface samples per organ");
  reg->add_option("--seed", reg_seed, "sampling seed");
  reg->add_option("-o,--output", reg_out, "aligned OBJ");
  reg->add_option("--summary", reg_summary, "write JSON summary here");

  // mc
  auto* mc = app.add_subcommand("mc", "marching-cubes surface of a volume");
  std::string mc_in, mc_out = "surface.obj";
  double mc_iso = 0.5;
  int mc_organ = 1;
  mc->add_option("volume", mc_in, "scalar or label MVF")->required();
  mc->add_option("--iso", mc_iso, "iso level");
  mc->add_option("--organ", mc_organ, "organ id for the output");
  mc->add_option("-o,--output", mc_out, "output OBJ");

  // voxelize
  auto* vox = app.add_subcommand("voxelize", "rasterize a watertight mesh onto a reference grid");
  std::string vox_mesh, vox_ref, vox_out = "labels.mvf";
  vox->add_option("mesh", vox_mesh, "mesh OBJ")->required();
  vox->add_option("reference", vox_ref, "reference MVF (defines dims/spacing/origin)")->required();
  vox->add_option("-o,--output", vox_out, "output label MVF");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  if (threads <= 0) {
    if (const char* env = std::getenv("MESHFLOW_THREADS")) threads = std::atoi(env);
  }
  set_thread_budget(threads > 0 ? threads : 1);

  try {
    if (*tpl) {
      if (tpl_threshold <= 0.0 || tpl_threshold > 1.0)
        raise(errc::config_error, "threshold must be in (0,1]");
      return cmd_template(tpl_inputs, tpl_threshold, tpl_smooth, tpl_out, tpl_names);
    }
    if (*fit_cmd)
      return cmd_fit(fit_template, fit_target, fit_config, fit_out,
                     fit_seed_set ? std::optional<std::uint64_t>(fit_seed) : std::nullopt);
    if (*met) return cmd_metrics(met_pred, met_gt, met_samples, met_seed, met_csv);
    if (*reg)
      return cmd_register(reg_mesh, reg_seg, reg_mode, reg_samples, reg_seed, reg_out,
                          reg_summary);
    if (*mc) return cmd_mc(mc_in, mc_iso, mc_organ, mc_out);
    if (*vox) return cmd_voxelize(vox_mesh, vox_ref, vox_out);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err.code());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitIo;
  }
  return kExitConfig;
}

}  // namespace meshflow
