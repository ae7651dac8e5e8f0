#pragma once

#include "meshflow/types.hpp"

namespace meshflow {

/// Closest point on triangle (a,b,c) to p (Ericson's region walk; exact).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

double point_triangle_sq_dist(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Proper triangle-triangle intersection: true when the intersection of the
/// two closed triangles has positive length (or positive area in the coplanar
/// case). Touching at a single point or along a shared boundary point set of
/// measure zero does not count.
bool tri_tri_intersect(const Vec3& a0, const Vec3& a1, const Vec3& a2,
                       const Vec3& b0, const Vec3& b1, const Vec3& b2);

}  // namespace meshflow
