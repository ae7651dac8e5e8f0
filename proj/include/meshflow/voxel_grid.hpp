#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshflow/types.hpp"

namespace meshflow {

enum class GridKind { label, scalar, prob };

/// Axis-aligned volume with physical spacing. Node-centered convention: voxel
/// (i,j,k) sits at world position origin + index * spacing (mm). Data is
/// row-major with x fastest; prob grids interleave channels per voxel.
struct VoxelGrid {
  Vec3i dims {0, 0, 0};
  Vec3 spacing {1.0, 1.0, 1.0};
  Vec3 origin {0.0, 0.0, 0.0};
  GridKind kind = GridKind::scalar;
  int channels = 1;  // >1 only for prob

  std::vector<std::uint8_t> labels;  // label kind
  std::vector<float> values;         // scalar / prob kinds

  static VoxelGrid make_label(Vec3i dims, Vec3 spacing = Vec3::Ones(), Vec3 origin = Vec3::Zero());
  static VoxelGrid make_scalar(Vec3i dims, Vec3 spacing = Vec3::Ones(), Vec3 origin = Vec3::Zero());
  static VoxelGrid make_prob(Vec3i dims, int channels, Vec3 spacing = Vec3::Ones(),
                             Vec3 origin = Vec3::Zero());

  Index num_voxels() const {
    return Index(dims.x()) * Index(dims.y()) * Index(dims.z());
  }
  Index flat(int i, int j, int k) const {
    return Index(i) + Index(dims.x()) * (Index(j) + Index(dims.y()) * Index(k));
  }
  Vec3 world(int i, int j, int k) const {
    return origin + Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z());
  }

  std::uint8_t label_at(int i, int j, int k) const { return labels[flat(i, j, k)]; }
  float value_at(int i, int j, int k) const { return values[flat(i, j, k)]; }
  float prob_at(int i, int j, int k, int c) const { return values[flat(i, j, k) * channels + c]; }

  bool same_extent(const VoxelGrid& other) const {
    return dims == other.dims && spacing == other.spacing && origin == other.origin;
  }

  /// Checks dims/spacing positivity, data length, finiteness (prob), and
  /// label range when num_classes > 0.
  void validate(int num_classes = 0) const;

  /// Sorted unique labels present (label kind).
  std::vector<int> present_labels() const;
};

// --- MVF file format: UTF-8 "key=value" header terminated by a blank line,
// --- then raw little-endian payload. Round-trips bit-exactly.
void save_mvf(const VoxelGrid& grid, const std::string& path);
VoxelGrid load_mvf(const std::string& path);

/// Mean negative log-softmax of the true-class logit, Softmax taken per voxel
/// over `pred` channels. `pred` holds pre-softmax scores.
double cross_entropy(const VoxelGrid& pred_logits, const VoxelGrid& gt_labels);

/// 0/1 indicator of `label == cls` as a scalar grid (same extent).
VoxelGrid class_indicator(const VoxelGrid& labels, int cls);

}  // namespace meshflow
