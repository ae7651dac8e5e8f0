#pragma once

#include <vector>

#include "meshflow/types.hpp"

namespace meshflow {

/// Exact nearest-neighbor index over a fixed 3D point set. Ties in distance
/// resolve to the lowest point index, and subtree pruning is strict so an
/// equally distant lower index is never skipped.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const MatX3& points) { build(points); }

  void build(const MatX3& points);

  Index size() const { return points_.rows(); }

  /// Index of the nearest point; `sq_dist_out` receives the squared distance.
  Index nearest(const Vec3& query, double* sq_dist_out = nullptr) const;

 private:
  struct Node {
    // leaf when axis < 0: [begin, end) into order_
    int axis = -1;
    double split = 0.0;
    Index left = -1, right = -1;
    Index begin = 0, end = 0;
  };

  Index build_range(Index begin, Index end, int depth);
  void search(Index node, const Vec3& query, Index& best, double& best_sq) const;

  MatX3 points_;
  std::vector<Index> order_;
  std::vector<Node> nodes_;
  Index root_ = -1;
};

}  // namespace meshflow
