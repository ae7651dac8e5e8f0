#include "meshflow/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace meshflow {

VoxelGrid VoxelGrid::make_label(Vec3i dims, Vec3 spacing, Vec3 origin) {
  VoxelGrid g;
  g.dims = dims;
  g.spacing = spacing;
  g.origin = origin;
  g.kind = GridKind::label;
  g.labels.assign(size_t(g.num_voxels()), 0);
  return g;
}

VoxelGrid VoxelGrid::make_scalar(Vec3i dims, Vec3 spacing, Vec3 origin) {
  VoxelGrid g;
  g.dims = dims;
  g.spacing = spacing;
  g.origin = origin;
  g.kind = GridKind::scalar;
  g.values.assign(size_t(g.num_voxels()), 0.0f);
  return g;
}

VoxelGrid VoxelGrid::make_prob(Vec3i dims, int channels, Vec3 spacing, Vec3 origin) {
  VoxelGrid g;
  g.dims = dims;
  g.spacing = spacing;
  g.origin = origin;
  g.kind = GridKind::prob;
  g.channels = channels;
  g.values.assign(size_t(g.num_voxels()) * channels, 0.0f);
  return g;
}

void VoxelGrid::validate(int num_classes) const {
  if (dims.minCoeff() <= 0) raise(errc::degenerate_grid, "non-positive grid dims");
  if (!(spacing.array() > 0.0).all()) raise(errc::degenerate_grid, "non-positive spacing");
  const Index n = num_voxels();
  switch (kind) {
    case GridKind::label:
      if (Index(labels.size()) != n) raise(errc::shape_mismatch, "label data length mismatch");
      if (num_classes > 0)
        for (std::uint8_t v : labels)
          if (v >= num_classes) raise(errc::invalid_class, "label out of class range");
      break;
    case GridKind::scalar:
      if (Index(values.size()) != n) raise(errc::shape_mismatch, "scalar data length mismatch");
      break;
    case GridKind::prob:
      if (channels < 1) raise(errc::shape_mismatch, "prob grid needs channels >= 1");
      if (Index(values.size()) != n * channels)
        raise(errc::shape_mismatch, "prob data length mismatch");
      for (float v : values)
        if (!std::isfinite(v)) raise(errc::shape_mismatch, "non-finite prob value");
      break;
  }
}

std::vector<int> VoxelGrid::present_labels() const {
  std::set<int> ids;
  for (std::uint8_t v : labels) ids.insert(int(v));
  return {ids.begin(), ids.end()};
}

VoxelGrid class_indicator(const VoxelGrid& labels, int cls) {
  VoxelGrid out = VoxelGrid::make_scalar(labels.dims, labels.spacing, labels.origin);
  for (size_t i = 0; i < labels.labels.size(); ++i)
    out.values[i] = labels.labels[i] == cls ? 1.0f : 0.0f;
  return out;
}

// --- MVF ----------------------------------------------------------------------

namespace {

const char* kind_name(GridKind kind) {
  switch (kind) {
    case GridKind::label: return "label";
    case GridKind::scalar: return "scalar";
    case GridKind::prob: return "prob";
  }
  return "?";
}

}  // namespace

void save_mvf(const VoxelGrid& grid, const std::string& path) {
  grid.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::io_error, "cannot open " + path + " for writing");
  char buf[256];
  out << "magic=MVF1\n";
  out << "kind=" << kind_name(grid.kind) << "\n";
  std::snprintf(buf, sizeof buf, "dims=%d %d %d\n", grid.dims.x(), grid.dims.y(), grid.dims.z());
  out << buf;
  std::snprintf(buf, sizeof buf, "spacing=%.17g %.17g %.17g\n", grid.spacing.x(),
                grid.spacing.y(), grid.spacing.z());
  out << buf;
  std::snprintf(buf, sizeof buf, "origin=%.17g %.17g %.17g\n", grid.origin.x(), grid.origin.y(),
                grid.origin.z());
  out << buf;
  out << "channels=" << (grid.kind == GridKind::prob ? grid.channels : 1) << "\n";
  out << "dtype=" << (grid.kind == GridKind::label ? "u8" : "f32") << "\n";
  out << "\n";
  // payload is little-endian; this code assumes a little-endian host
  if (grid.kind == GridKind::label) {
    out.write(reinterpret_cast<const char*>(grid.labels.data()),
              std::streamsize(grid.labels.size()));
  } else {
    out.write(reinterpret_cast<const char*>(grid.values.data()),
              std::streamsize(grid.values.size() * sizeof(float)));
  }
  if (!out) raise(errc::io_error, "write failed: " + path);
}

VoxelGrid load_mvf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::io_error, "cannot open " + path);

  std::map<std::string, std::string> header;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) raise(errc::io_error, "malformed MVF header line: " + line);
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto need = [&](const std::string& key) -> const std::string& {
    const auto it = header.find(key);
    if (it == header.end()) raise(errc::io_error, "MVF header missing key '" + key + "'");
    return it->second;
  };
  if (need("magic") != "MVF1") raise(errc::io_error, "not an MVF1 file: " + path);

  VoxelGrid grid;
  const std::string& kind = need("kind");
  if (kind == "label") grid.kind = GridKind::label;
  else if (kind == "scalar") grid.kind = GridKind::scalar;
  else if (kind == "prob") grid.kind = GridKind::prob;
  else raise(errc::io_error, "unknown MVF kind '" + kind + "'");

  {
    std::istringstream ss(need("dims"));
    ss >> grid.dims.x() >> grid.dims.y() >> grid.dims.z();
    if (!ss) raise(errc::io_error, "bad dims in " + path);
  }
  {
    std::istringstream ss(need("spacing"));
    ss >> grid.spacing.x() >> grid.spacing.y() >> grid.spacing.z();
    if (!ss) raise(errc::io_error, "bad spacing in " + path);
  }
  {
    std::istringstream ss(need("origin"));
    ss >> grid.origin.x() >> grid.origin.y() >> grid.origin.z();
    if (!ss) raise(errc::io_error, "bad origin in " + path);
  }
  grid.channels = std::stoi(need("channels"));
  const std::string& dtype = need("dtype");

  const Index n = grid.num_voxels();
  if (grid.kind == GridKind::label) {
    if (dtype != "u8") raise(errc::io_error, "label MVF must be u8");
    grid.labels.resize(size_t(n));
    in.read(reinterpret_cast<char*>(grid.labels.data()), std::streamsize(grid.labels.size()));
  } else {
    if (dtype != "f32") raise(errc::io_error, kind + " MVF must be f32");
    grid.values.resize(size_t(n) * (grid.kind == GridKind::prob ? grid.channels : 1));
    in.read(reinterpret_cast<char*>(grid.values.data()),
            std::streamsize(grid.values.size() * sizeof(float)));
  }
  if (!in) raise(errc::io_error, "truncated MVF payload: " + path);
  grid.validate();
  return grid;
}

// --- cross entropy --------------------------------------------------------------

double cross_entropy(const VoxelGrid& pred_logits, const VoxelGrid& gt_labels) {
  if (pred_logits.kind != GridKind::prob || gt_labels.kind != GridKind::label)
    raise(errc::shape_mismatch, "cross_entropy expects prob logits and label ground truth");
  if (pred_logits.dims != gt_labels.dims) raise(errc::shape_mismatch, "cross_entropy dims differ");
  const int C = pred_logits.channels;
  const Index n = pred_logits.num_voxels();

  double sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int truth = gt_labels.labels[size_t(i)];
    if (truth >= C) raise(errc::invalid_class, "ground-truth class exceeds channel count");
    const float* logits = pred_logits.values.data() + size_t(i) * C;
    // log-sum-exp with max shift for stability
    double max_logit = logits[0];
    for (int c = 1; c < C; ++c) max_logit = std::max(max_logit, double(logits[c]));
    double lse = 0.0;
    for (int c = 0; c < C; ++c) lse += std::exp(double(logits[c]) - max_logit);
    sum += std::log(lse) + max_logit - double(logits[truth]);
  }
  return sum / double(n);
}

}  // namespace meshflow
