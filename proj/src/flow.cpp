#include "meshflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "meshflow/voxel_grid.hpp"

namespace meshflow {

FlowField FlowField::zeros(Vec3i dims, Vec3 lo, Vec3 hi) {
  if (dims.minCoeff() < 2) raise(errc::degenerate_grid, "flow lattice needs >= 2 nodes per axis");
  FlowField field;
  field.dims = dims;
  field.origin = lo;
  field.spacing = (hi - lo).cwiseQuotient((dims - Vec3i::Ones()).cast<double>());
  field.data = MatX3::Zero(field.num_nodes(), 3);
  return field;
}

namespace {

struct LatticeCoord {
  int i0, j0, k0;
  double fx, fy, fz;
  bool clamped_x, clamped_y, clamped_z;
};

LatticeCoord locate(const FlowField& field, const Vec3& p) {
  LatticeCoord lc;
  const auto axis = [&](double value, double lo, double step, int n, int& base, double& frac,
                        bool& clamped) {
    double u = (value - lo) / step;
    clamped = u <= 0.0 || u >= double(n - 1);
    u = std::clamp(u, 0.0, double(n - 1));
    base = std::min(int(u), n - 2);
    frac = u - base;
  };
  axis(p.x(), field.origin.x(), field.spacing.x(), field.dims.x(), lc.i0, lc.fx, lc.clamped_x);
  axis(p.y(), field.origin.y(), field.spacing.y(), field.dims.y(), lc.j0, lc.fy, lc.clamped_y);
  axis(p.z(), field.origin.z(), field.spacing.z(), field.dims.z(), lc.k0, lc.fz, lc.clamped_z);
  return lc;
}

}  // namespace

Vec3 sample_flow(const FlowField& field, const Vec3& p) {
  const LatticeCoord lc = locate(field, p);
  Vec3 value = Vec3::Zero();
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? lc.fx : 1.0 - lc.fx) * (dy ? lc.fy : 1.0 - lc.fy) *
                     (dz ? lc.fz : 1.0 - lc.fz);
    value += w * field.data.row(field.flat(lc.i0 + dx, lc.j0 + dy, lc.k0 + dz)).transpose();
  }
  return value;
}

FlowSample sample_flow_detailed(const FlowField& field, const Vec3& p) {
  const LatticeCoord lc = locate(field, p);
  const double inv_sx = lc.clamped_x ? 0.0 : 1.0 / field.spacing.x();
  const double inv_sy = lc.clamped_y ? 0.0 : 1.0 / field.spacing.y();
  const double inv_sz = lc.clamped_z ? 0.0 : 1.0 / field.spacing.z();

  FlowSample out;
  out.value = Vec3::Zero();
  out.jacobian = Mat3::Zero();
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double wx = dx ? lc.fx : 1.0 - lc.fx;
    const double wy = dy ? lc.fy : 1.0 - lc.fy;
    const double wz = dz ? lc.fz : 1.0 - lc.fz;
    const double w = wx * wy * wz;
    const Index node = field.flat(lc.i0 + dx, lc.j0 + dy, lc.k0 + dz);
    const Vec3 nodal = field.data.row(node).transpose();

    const Vec3 dw((dx ? 1.0 : -1.0) * wy * wz * inv_sx,
                  (dy ? 1.0 : -1.0) * wx * wz * inv_sy,
                  (dz ? 1.0 : -1.0) * wx * wy * inv_sz);

    out.value += w * nodal;
    out.jacobian += nodal * dw.transpose();
    out.corners[c] = node;
    out.weights[c] = w;
    out.weight_grads[c] = dw;
  }
  return out;
}

FlowStack FlowStack::zeros(const std::vector<int>& organ_ids,
                           const std::array<Vec3i, 5>& stage_dims, Vec3 lo, Vec3 hi) {
  FlowStack stack;
  stack.organs = organ_ids;
  std::sort(stack.organs.begin(), stack.organs.end());
  for (int s = 0; s < 4; ++s) {
    stack.per_organ[s].reserve(stack.organs.size());
    for (size_t o = 0; o < stack.organs.size(); ++o)
      stack.per_organ[s].push_back(FlowField::zeros(stage_dims[s], lo, hi));
  }
  stack.shared = FlowField::zeros(stage_dims[4], lo, hi);
  return stack;
}

FlowStack FlowStack::zeros_like() const {
  FlowStack out = *this;
  for (int s = 0; s < 4; ++s)
    for (FlowField& f : out.per_organ[s]) f.data.setZero();
  out.shared.data.setZero();
  return out;
}

Index FlowStack::organ_position(int organ) const {
  const auto it = std::lower_bound(organs.begin(), organs.end(), organ);
  if (it == organs.end() || *it != organ) return -1;
  return Index(it - organs.begin());
}

const FlowField& FlowStack::stage_field(int stage, int organ) const {
  if (stage == 4) return shared;
  const Index pos = organ_position(organ);
  if (pos < 0) raise(errc::organ_mismatch, "no flow field for organ " + std::to_string(organ));
  return per_organ[stage][size_t(pos)];
}

FlowField& FlowStack::stage_field(int stage, int organ) {
  return const_cast<FlowField&>(std::as_const(*this).stage_field(stage, organ));
}

void FlowStack::validate() const {
  if (steps_per_stage < 1) raise(errc::config_error, "steps_per_stage must be positive");
  if (std::abs(steps_per_stage * h - 1.0) > 1e-12)
    raise(errc::config_error, "steps_per_stage * h must equal 1");
  for (int s = 0; s < 4; ++s)
    if (per_organ[s].size() != organs.size())
      raise(errc::organ_mismatch, "stage field count does not match organ count");
  for (int s = 0; s < 4; ++s)
    for (const FlowField& f : per_organ[s])
      if (!f.data.allFinite()) raise(errc::non_finite_loss, "non-finite flow lattice");
  if (!shared.data.allFinite()) raise(errc::non_finite_loss, "non-finite flow lattice");
}

IntegrationResult integrate(const FlowStack& stack, const TriMesh& tmpl, IntegrationTape* tape) {
  stack.validate();
  for (int organ : tmpl.organs())
    if (stack.organ_position(organ) < 0)
      raise(errc::organ_mismatch, "template organ " + std::to_string(organ) + " missing in stack");

  const Index n = tmpl.num_vertices();
  MatX3 x = tmpl.vertices;
  if (tape) {
    tape->snapshots.clear();
    tape->snapshots.reserve(FlowStack::kStages * stack.steps_per_stage + 1);
  }

  IntegrationResult result;
  for (int stage = 0; stage < FlowStack::kStages; ++stage) {
    for (int step = 0; step < stack.steps_per_stage; ++step) {
      if (tape) tape->snapshots.push_back(x);
      MatX3 next(n, 3);
      for (Index v = 0; v < n; ++v) {
        const FlowField& field = stack.stage_field(stage, tmpl.organ_of_vertex[v]);
        const Vec3 p = x.row(v).transpose();
        next.row(v) = (p + stack.h * sample_flow(field, p)).transpose();
      }
      x.swap(next);
    }
    TriMesh stage_mesh = tmpl;
    stage_mesh.vertices = x;
    result.intermediates[stage] = std::move(stage_mesh);
  }
  if (tape) tape->snapshots.push_back(x);
  result.final = result.intermediates[FlowStack::kStages - 1];
  return result;
}

FlowStack backprop_to_lattices(const FlowStack& stack, const TriMesh& tmpl,
                               const IntegrationTape& tape,
                               const std::array<MatX3, FlowStack::kStages>& stage_grads) {
  const Index n = tmpl.num_vertices();
  const int steps = stack.steps_per_stage;
  FlowStack grad = stack.zeros_like();

  // dL/dx at the current snapshot, accumulated backwards
  MatX3 gx = MatX3::Zero(n, 3);
  for (int stage = FlowStack::kStages - 1; stage >= 0; --stage) {
    if (stage_grads[stage].rows() == n) gx += stage_grads[stage];
    for (int step = steps - 1; step >= 0; --step) {
      const MatX3& x = tape.snapshots[size_t(stage * steps + step)];
      MatX3 gx_prev(n, 3);
      for (Index v = 0; v < n; ++v) {
        const int organ = tmpl.organ_of_vertex[v];
        const FlowField& field = stack.stage_field(stage, organ);
        FlowField& gfield = grad.stage_field(stage, organ);
        const FlowSample smp = sample_flow_detailed(field, x.row(v).transpose());

        const Vec3 g = gx.row(v).transpose();
        // x_{k+1} = x_k + h * Phi(x_k)
        gx_prev.row(v) = (g + stack.h * (smp.jacobian.transpose() * g)).transpose();
        for (int c = 0; c < 8; ++c)
          gfield.data.row(smp.corners[c]) += (stack.h * smp.weights[c]) * g.transpose();
      }
      gx.swap(gx_prev);
    }
  }
  return grad;
}

double min_jacobian_det(const FlowField& field, double h) {
  const int nx = field.dims.x(), ny = field.dims.y(), nz = field.dims.z();
  double min_det = std::numeric_limits<double>::infinity();
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        Mat3 J;
        const auto deriv = [&](int axis) -> Vec3 {
          int lo_i = i, hi_i = i, lo_j = j, hi_j = j, lo_k = k, hi_k = k;
          if (axis == 0) { lo_i = std::max(0, i - 1); hi_i = std::min(nx - 1, i + 1); }
          if (axis == 1) { lo_j = std::max(0, j - 1); hi_j = std::min(ny - 1, j + 1); }
          if (axis == 2) { lo_k = std::max(0, k - 1); hi_k = std::min(nz - 1, k + 1); }
          const double span = (axis == 0 ? (hi_i - lo_i) * field.spacing.x()
                               : axis == 1 ? (hi_j - lo_j) * field.spacing.y()
                                           : (hi_k - lo_k) * field.spacing.z());
          if (span == 0.0) return Vec3::Zero();
          return (field.data.row(field.flat(hi_i, hi_j, hi_k)) -
                  field.data.row(field.flat(lo_i, lo_j, lo_k)))
                     .transpose() / span;
        };
        J.col(0) = deriv(0);
        J.col(1) = deriv(1);
        J.col(2) = deriv(2);
        min_det = std::min(min_det, (Mat3::Identity() + h * J).determinant());
      }
    }
  }
  return min_det;
}

// --- serialization ------------------------------------------------------------

namespace {

VoxelGrid field_to_grid(const FlowField& field) {
  VoxelGrid grid = VoxelGrid::make_prob(field.dims, 3, field.spacing, field.origin);
  for (Index node = 0; node < field.num_nodes(); ++node)
    for (int c = 0; c < 3; ++c) grid.values[size_t(node) * 3 + c] = float(field.data(node, c));
  return grid;
}

FlowField grid_to_field(const VoxelGrid& grid) {
  if (grid.kind != GridKind::prob || grid.channels != 3)
    raise(errc::io_error, "flow field MVF must be a 3-channel volume");
  FlowField field;
  field.dims = grid.dims;
  field.spacing = grid.spacing;
  field.origin = grid.origin;
  field.data.resize(field.num_nodes(), 3);
  for (Index node = 0; node < field.num_nodes(); ++node)
    for (int c = 0; c < 3; ++c) field.data(node, c) = double(grid.values[size_t(node) * 3 + c]);
  return field;
}

}  // namespace

void save_flow_stack(const FlowStack& stack, const std::string& manifest_path) {
  stack.validate();
  namespace fs = std::filesystem;
  const fs::path manifest(manifest_path);
  const fs::path dir = manifest.parent_path();
  const std::string base = manifest.stem().string();

  std::ofstream out(manifest_path);
  if (!out) raise(errc::io_error, "cannot open " + manifest_path + " for writing");
  out << "magic=MFSTACK1\n";
  out << "steps_per_stage=" << stack.steps_per_stage << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "h=%.17g\n", stack.h);
  out << buf;
  const auto write_field = [&](int stage, int organ, const FlowField& field) {
    std::string name = base + "_stage" + std::to_string(stage) +
                       (organ >= 0 ? "_organ" + std::to_string(organ) : "_shared") + ".mvf";
    save_mvf(field_to_grid(field), (dir / name).string());
    out << "field stage=" << stage << " organ=" << organ << " file=" << name << "\n";
  };
  for (int s = 0; s < 4; ++s)
    for (size_t o = 0; o < stack.organs.size(); ++o)
      write_field(s, stack.organs[o], stack.per_organ[s][o]);
  write_field(4, -1, stack.shared);
  if (!out) raise(errc::io_error, "write failed: " + manifest_path);
}

FlowStack load_flow_stack(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) raise(errc::io_error, "cannot open " + manifest_path);
  const fs::path dir = fs::path(manifest_path).parent_path();

  FlowStack stack;
  std::map<std::pair<int, int>, FlowField> fields;  // (stage, organ)
  std::string line;
  bool magic_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("magic=", 0) == 0) {
      if (line != "magic=MFSTACK1") raise(errc::io_error, "not a flow-stack manifest");
      magic_seen = true;
    } else if (line.rfind("steps_per_stage=", 0) == 0) {
      stack.steps_per_stage = std::stoi(line.substr(16));
    } else if (line.rfind("h=", 0) == 0) {
      stack.h = std::stod(line.substr(2));
    } else if (line.rfind("field ", 0) == 0) {
      std::istringstream ss(line.substr(6));
      std::map<std::string, std::string> kv;
      std::string token;
      while (ss >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) raise(errc::io_error, "malformed manifest line: " + line);
        kv[token.substr(0, eq)] = token.substr(eq + 1);
      }
      const int stage = std::stoi(kv.at("stage"));
      const int organ = std::stoi(kv.at("organ"));
      fields.emplace(std::make_pair(stage, organ),
                     grid_to_field(load_mvf((dir / kv.at("file")).string())));
    } else {
      raise(errc::io_error, "unrecognized manifest line: " + line);
    }
  }
  if (!magic_seen) raise(errc::io_error, "manifest missing magic line");

  std::set<int> organ_ids;
  for (const auto& [key, field] : fields)
    if (key.first < 4) organ_ids.insert(key.second);
  stack.organs.assign(organ_ids.begin(), organ_ids.end());
  for (int s = 0; s < 4; ++s) {
    for (int organ : stack.organs) {
      const auto it = fields.find({s, organ});
      if (it == fields.end())
        raise(errc::io_error, "manifest missing stage " + std::to_string(s) + " organ " +
                                  std::to_string(organ));
      stack.per_organ[s].push_back(std::move(it->second));
    }
  }
  const auto it = fields.find({4, -1});
  if (it == fields.end()) raise(errc::io_error, "manifest missing the shared stage-4 field");
  stack.shared = std::move(it->second);
  stack.validate();
  return stack;
}

}  // namespace meshflow
