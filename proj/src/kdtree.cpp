#include "meshflow/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace meshflow {

namespace {
constexpr Index kLeafSize = 8;
}

void KdTree::build(const MatX3& points) {
  points_ = points;
  nodes_.clear();
  order_.resize(points.rows());
  std::iota(order_.begin(), order_.end(), Index(0));
  root_ = points.rows() > 0 ? build_range(0, points.rows(), 0) : -1;
}

Index KdTree::build_range(Index begin, Index end, int depth) {
  Node node;
  if (end - begin <= kLeafSize) {
    node.begin = begin;
    node.end = end;
    // keep leaf entries in index order for the lowest-index tie rule
    std::sort(order_.begin() + begin, order_.begin() + end);
    nodes_.push_back(node);
    return Index(nodes_.size()) - 1;
  }

  // split along the widest extent of this range
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (Index i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_.row(order_[i]).transpose());
    hi = hi.cwiseMax(points_.row(order_[i]).transpose());
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const Index mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](Index a, Index b) {
                     const double pa = points_(a, axis), pb = points_(b, axis);
                     return pa < pb || (pa == pb && a < b);
                   });
  node.axis = axis;
  node.split = points_(order_[mid], axis);

  const Index self = Index(nodes_.size());
  nodes_.push_back(node);
  const Index left = build_range(begin, mid, depth + 1);
  const Index right = build_range(mid, end, depth + 1);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void KdTree::search(Index node_id, const Vec3& query, Index& best, double& best_sq) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (Index i = node.begin; i < node.end; ++i) {
      const Index idx = order_[i];
      const double d = (points_.row(idx).transpose() - query).squaredNorm();
      if (d < best_sq || (d == best_sq && (best < 0 || idx < best))) {
        best_sq = d;
        best = idx;
      }
    }
    return;
  }
  const double delta = query[node.axis] - node.split;
  const Index near = delta < 0.0 ? node.left : node.right;
  const Index far = delta < 0.0 ? node.right : node.left;
  search(near, query, best, best_sq);
  // '<=' keeps equally distant subtrees alive so a lower index can still win
  if (delta * delta <= best_sq) search(far, query, best, best_sq);
}

Index KdTree::nearest(const Vec3& query, double* sq_dist_out) const {
  Index best = -1;
  double best_sq = std::numeric_limits<double>::infinity();
  if (root_ >= 0) search(root_, query, best, best_sq);
  if (sq_dist_out) *sq_dist_out = best_sq;
  return best;
}

}  // namespace meshflow
