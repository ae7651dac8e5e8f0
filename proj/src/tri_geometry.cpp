#include "meshflow/tri_geometry.hpp"

#include <algorithm>
#include <cmath>

namespace meshflow {

namespace {

Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double denom = ab.squaredNorm();
  if (denom == 0.0) return a;
  const double t = std::clamp(ab.dot(p - a) / denom, 0.0, 1.0);
  return a + t * ab;
}

}  // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Ericson's Voronoi-region walk.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double denom = d1 - d3;
    if (denom > 0.0) return a + (d1 / denom) * ab;
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double denom = d2 - d6;
    if (denom > 0.0) return a + (d2 / denom) * ac;
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double denom = (d4 - d3) + (d5 - d6);
    if (denom > 0.0) return b + ((d4 - d3) / denom) * (c - b);
  }

  const double denom = va + vb + vc;
  if (denom <= 0.0) {
    // collapsed triangle: best of the three edges
    Vec3 best = closest_point_on_segment(p, a, b);
    double best_sq = (p - best).squaredNorm();
    for (const Vec3& q : {closest_point_on_segment(p, b, c), closest_point_on_segment(p, c, a)}) {
      const double sq = (p - q).squaredNorm();
      if (sq < best_sq) {
        best_sq = sq;
        best = q;
      }
    }
    return best;
  }
  const double v = vb / denom, w = vc / denom;
  return a + v * ab + w * ac;
}

double point_triangle_sq_dist(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  return (p - closest_point_on_triangle(p, a, b, c)).squaredNorm();
}

namespace {

// Interval of one triangle on the intersection line, in Moller's common
// scaling. Returns false when the setup degenerates to the coplanar case.
struct ScaledInterval {
  double a = 0, b = 0, c = 0, x0 = 0, x1 = 0;
};

bool compute_interval(double vv0, double vv1, double vv2, double d0, double d1, double d2,
                      ScaledInterval& out) {
  const double d0d1 = d0 * d1, d0d2 = d0 * d2;
  if (d0d1 > 0.0) {
    // d0, d1 on one side; d2 on the other or on the plane
    out = {vv2, (vv0 - vv2) * d2, (vv1 - vv2) * d2, d2 - d0, d2 - d1};
  } else if (d0d2 > 0.0) {
    out = {vv1, (vv0 - vv1) * d1, (vv2 - vv1) * d1, d1 - d0, d1 - d2};
  } else if (d1 * d2 > 0.0 || d0 != 0.0) {
    out = {vv0, (vv1 - vv0) * d0, (vv2 - vv0) * d0, d0 - d1, d0 - d2};
  } else if (d1 != 0.0) {
    out = {vv1, (vv0 - vv1) * d1, (vv2 - vv1) * d1, d1 - d0, d1 - d2};
  } else if (d2 != 0.0) {
    out = {vv2, (vv0 - vv2) * d2, (vv1 - vv2) * d2, d2 - d0, d2 - d1};
  } else {
    return false;  // all distances zero: coplanar
  }
  return true;
}

// Strict separating-axis test of the projected triangles: true only when the
// intersection has positive area, so edge/vertex touching never counts.
bool coplanar_proper_overlap(const Vec3& n, const Vec3& a0, const Vec3& a1, const Vec3& a2,
                             const Vec3& b0, const Vec3& b1, const Vec3& b2) {
  // project out the dominant normal axis
  int drop = 0;
  n.cwiseAbs().maxCoeff(&drop);
  const int u = (drop + 1) % 3, v = (drop + 2) % 3;

  const double ta[3][2] = {{a0[u], a0[v]}, {a1[u], a1[v]}, {a2[u], a2[v]}};
  const double tb[3][2] = {{b0[u], b0[v]}, {b1[u], b1[v]}, {b2[u], b2[v]}};

  const auto area2 = [](const double t[3][2]) {
    return (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
  };
  if (area2(ta) == 0.0 || area2(tb) == 0.0) return false;

  const auto separated = [](const double p[3][2], const double q[3][2]) {
    for (int e = 0; e < 3; ++e) {
      const double ex = p[(e + 1) % 3][0] - p[e][0];
      const double ey = p[(e + 1) % 3][1] - p[e][1];
      // outward-agnostic axis normal
      const double nx = -ey, ny = ex;
      double pmin = std::numeric_limits<double>::infinity(), pmax = -pmin;
      double qmin = pmin, qmax = -pmin;
      for (int i = 0; i < 3; ++i) {
        const double dp = nx * p[i][0] + ny * p[i][1];
        const double dq = nx * q[i][0] + ny * q[i][1];
        pmin = std::min(pmin, dp); pmax = std::max(pmax, dp);
        qmin = std::min(qmin, dq); qmax = std::max(qmax, dq);
      }
      if (pmax <= qmin || qmax <= pmin) return true;  // touching = separated
    }
    return false;
  };
  return !separated(ta, tb) && !separated(tb, ta);
}

}  // namespace

bool tri_tri_intersect(const Vec3& a0, const Vec3& a1, const Vec3& a2,
                       const Vec3& b0, const Vec3& b1, const Vec3& b2) {
  // plane of B
  const Vec3 nb = (b1 - b0).cross(b2 - b0);
  if (nb.isZero(0.0)) return false;  // collapsed: no interior to pierce
  const double db = -nb.dot(b0);
  double da0 = nb.dot(a0) + db;
  double da1 = nb.dot(a1) + db;
  double da2 = nb.dot(a2) + db;
  if ((da0 > 0.0 && da1 > 0.0 && da2 > 0.0) || (da0 < 0.0 && da1 < 0.0 && da2 < 0.0)) return false;

  // plane of A
  const Vec3 na = (a1 - a0).cross(a2 - a0);
  if (na.isZero(0.0)) return false;
  const double daq = -na.dot(a0);
  double db0 = na.dot(b0) + daq;
  double db1 = na.dot(b1) + daq;
  double db2 = na.dot(b2) + daq;
  if ((db0 > 0.0 && db1 > 0.0 && db2 > 0.0) || (db0 < 0.0 && db1 < 0.0 && db2 < 0.0)) return false;

  // direction of the intersection line; project onto its dominant axis
  const Vec3 dir = na.cross(nb);
  int axis = 0;
  dir.cwiseAbs().maxCoeff(&axis);

  ScaledInterval ia, ib;
  const bool ok_a = compute_interval(a0[axis], a1[axis], a2[axis], da0, da1, da2, ia);
  const bool ok_b = compute_interval(b0[axis], b1[axis], b2[axis], db0, db1, db2, ib);
  if (!ok_a || !ok_b) return coplanar_proper_overlap(nb, a0, a1, a2, b0, b1, b2);

  // both intervals in the common xx*yy scaling, order fixed by sorting
  const double xx = ia.x0 * ia.x1, yy = ib.x0 * ib.x1, xxyy = xx * yy;
  double i1lo = ia.a * xxyy + ia.b * ia.x1 * yy;
  double i1hi = ia.a * xxyy + ia.c * ia.x0 * yy;
  double i2lo = ib.a * xxyy + ib.b * xx * ib.x1;
  double i2hi = ib.a * xxyy + ib.c * xx * ib.x0;
  if (i1lo > i1hi) std::swap(i1lo, i1hi);
  if (i2lo > i2hi) std::swap(i2lo, i2hi);

  // strict overlap: endpoint contact is a measure-zero touch
  return i1hi > i2lo && i2hi > i1lo;
}

}  // namespace meshflow
