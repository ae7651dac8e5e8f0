#pragma once

#include <utility>
#include <vector>

#include "meshflow/trimesh.hpp"
#include "meshflow/types.hpp"

namespace meshflow {

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void expand(const Vec3& p) { lo = lo.cwiseMin(p); hi = hi.cwiseMax(p); }
  void expand(const Aabb& b) { lo = lo.cwiseMin(b.lo); hi = hi.cwiseMax(b.hi); }
  bool overlaps(const Aabb& b) const {
    return (lo.array() <= b.hi.array()).all() && (b.lo.array() <= hi.array()).all();
  }
  double sq_dist(const Vec3& p) const {
    Vec3 d = (lo - p).cwiseMax(0.0).cwiseMax(p - hi);
    return d.squaredNorm();
  }
};

/// Axis-aligned bounding-box tree over the faces of one mesh. Used for exact
/// closest-triangle queries and for intersection candidate enumeration.
class TriBvh {
 public:
  TriBvh() = default;
  explicit TriBvh(const TriMesh& mesh);

  bool empty() const { return nodes_.empty(); }

  /// Exact squared distance to the closest triangle; `face_out` gets its index
  /// (lowest face index on exact ties).
  double closest_sq_dist(const Vec3& p, Index* face_out = nullptr) const;

  /// Faces whose box overlaps `box`, in ascending face order.
  void collect_overlaps(const Aabb& box, std::vector<Index>& out) const;

  const Aabb& face_box(Index f) const { return face_boxes_[f]; }

 private:
  struct Node {
    Aabb box;
    Index left = -1, right = -1;  // internal
    Index begin = 0, end = 0;     // leaf range into order_ when left < 0
  };

  Index build_range(Index begin, Index end);

  const TriMesh* mesh_ = nullptr;
  std::vector<Aabb> face_boxes_;
  std::vector<Vec3> centroids_;
  std::vector<Index> order_;
  std::vector<Node> nodes_;
  Index root_ = -1;
};

}  // namespace meshflow
