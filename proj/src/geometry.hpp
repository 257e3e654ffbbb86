#pragma once

// Internal geometry helpers shared by the triangulation and the Sibson code.

#include <vector>

#include "ikk/types.hpp"

namespace ikk::detail {

/// Exact sign of det[b-a, c-a, d-a].
int orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

/// Exact in-sphere sign: +1 when e is strictly inside the circumsphere of the
/// positively oriented tetrahedron abcd, -1 outside, 0 on it.
int insphere(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e);

/// Exact in-circle sign for e coplanar with the triangle abc: +1 inside its
/// circumcircle, -1 outside, 0 on it.
int coplanar_incircle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& e);

/// Sign of the orientation of (a, b, c) inside their common plane, measured
/// in a coordinate projection that is consistent for one plane normal.
int coplanar_orient(const Vec3& a, const Vec3& b, const Vec3& c, int drop_axis);

/// Lexicographic order on coordinates.
bool lex_less(const Vec3& a, const Vec3& b);

/// In-sphere with a symbolic perturbation of the lifting map ordered by
/// lex_less; never returns 0 for non-coplanar abcd and distinct points.
int insphere_perturbed(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e);

/// Coplanar in-circle with the matching perturbation; never returns 0.
int coplanar_incircle_perturbed(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& e);

/// Convex polyhedron as a list of planar faces.
struct Polyhedron {
  std::vector<std::vector<Vec3>> faces;

  static Polyhedron cube(const Vec3& centre, double half);
  /// Keep the part where n.x <= d.
  void clip(const Vec3& n, double d, double eps);
  double volume() const;
  bool empty() const { return faces.size() < 4; }
};

}  // namespace ikk::detail
