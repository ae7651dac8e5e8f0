#include "meshflow/bvh.hpp"

#include <algorithm>
#include <numeric>

#include "meshflow/tri_geometry.hpp"

namespace meshflow {

namespace {
constexpr Index kLeafSize = 4;
}

TriBvh::TriBvh(const TriMesh& mesh) : mesh_(&mesh) {
  const Index f = mesh.num_faces();
  face_boxes_.resize(f);
  centroids_.resize(f);
  order_.resize(f);
  std::iota(order_.begin(), order_.end(), Index(0));
  for (Index i = 0; i < f; ++i) {
    Aabb box;
    Vec3 centroid = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      const Vec3 v = mesh.vertices.row(mesh.faces(i, k)).transpose();
      box.expand(v);
      centroid += v;
    }
    face_boxes_[i] = box;
    centroids_[i] = centroid / 3.0;
  }
  if (f > 0) root_ = build_range(0, f);
}

Index TriBvh::build_range(Index begin, Index end) {
  Node node;
  for (Index i = begin; i < end; ++i) node.box.expand(face_boxes_[order_[i]]);

  if (end - begin <= kLeafSize) {
    node.begin = begin;
    node.end = end;
    std::sort(order_.begin() + begin, order_.begin() + end);
    nodes_.push_back(node);
    return Index(nodes_.size()) - 1;
  }

  Aabb cbox;
  for (Index i = begin; i < end; ++i) cbox.expand(centroids_[order_[i]]);
  int axis = 0;
  (cbox.hi - cbox.lo).maxCoeff(&axis);

  const Index mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](Index a, Index b) {
                     const double ca = centroids_[a][axis], cb = centroids_[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });

  const Index self = Index(nodes_.size());
  nodes_.push_back(node);
  const Index left = build_range(begin, mid);
  const Index right = build_range(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

double TriBvh::closest_sq_dist(const Vec3& p, Index* face_out) const {
  Index best_face = -1;
  double best_sq = std::numeric_limits<double>::infinity();
  if (root_ < 0) {
    if (face_out) *face_out = -1;
    return best_sq;
  }

  // explicit stack ordered by box distance
  struct Entry { Index node; double sq; };
  std::vector<Entry> stack;
  stack.push_back({root_, nodes_[root_].box.sq_dist(p)});
  while (!stack.empty()) {
    const Entry e = stack.back();
    stack.pop_back();
    if (e.sq > best_sq) continue;
    const Node& node = nodes_[e.node];
    if (node.left < 0) {
      for (Index i = node.begin; i < node.end; ++i) {
        const Index f = order_[i];
        const Vec3 a = mesh_->vertices.row(mesh_->faces(f, 0)).transpose();
        const Vec3 b = mesh_->vertices.row(mesh_->faces(f, 1)).transpose();
        const Vec3 c = mesh_->vertices.row(mesh_->faces(f, 2)).transpose();
        const double sq = point_triangle_sq_dist(p, a, b, c);
        if (sq < best_sq || (sq == best_sq && f < best_face)) {
          best_sq = sq;
          best_face = f;
        }
      }
      continue;
    }
    const double sql = nodes_[node.left].box.sq_dist(p);
    const double sqr = nodes_[node.right].box.sq_dist(p);
    // push the farther child first so the nearer one is processed next
    if (sql <= sqr) {
      if (sqr <= best_sq) stack.push_back({node.right, sqr});
      if (sql <= best_sq) stack.push_back({node.left, sql});
    } else {
      if (sql <= best_sq) stack.push_back({node.left, sql});
      if (sqr <= best_sq) stack.push_back({node.right, sqr});
    }
  }
  if (face_out) *face_out = best_face;
  return best_sq;
}

void TriBvh::collect_overlaps(const Aabb& box, std::vector<Index>& out) const {
  out.clear();
  if (root_ < 0) return;
  std::vector<Index> stack {root_};
  while (!stack.empty()) {
    const Index id = stack.back();
    stack.pop_back();
    const Node& node = nodes_[id];
    if (!node.box.overlaps(box)) continue;
    if (node.left < 0) {
      for (Index i = node.begin; i < node.end; ++i) {
        const Index f = order_[i];
        if (face_boxes_[f].overlaps(box)) out.push_back(f);
      }
    } else {
      stack.push_back(node.right);
      stack.push_back(node.left);
    }
  }
  std::sort(out.begin(), out.end());
}

}  // namespace meshflow
