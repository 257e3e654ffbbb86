#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <gmpxx.h>

#include "geometry.hpp"
#include "ikk/interp.hpp"

namespace ikk::detail {

namespace {

template <class T>
struct P3 {
  T x, y, z;
};

template <class T>
P3<T> to(const Vec3& v) {
  return {T(v.x()), T(v.y()), T(v.z())};
}

template <class T>
P3<T> sub(const P3<T>& a, const P3<T>& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}

template <class T>
int sign_of(const T& v) {
  return v > 0 ? 1 : (v < 0 ? -1 : 0);
}

template <>
int sign_of(const mpq_class& v) {
  return sgn(v);
}

/// det[u; v; w] for rows u, v, w. With Abs the result is the permanent of
/// the absolute entries (an upper bound on the rounding error scale).
template <class T, bool Abs = false>
T det3(const P3<T>& u, const P3<T>& v, const P3<T>& w) {
  if constexpr (Abs) {
    return u.x * (v.y * w.z + v.z * w.y) + u.y * (v.x * w.z + v.z * w.x) +
           u.z * (v.x * w.y + v.y * w.x);
  } else {
    return u.x * (v.y * w.z - v.z * w.y) - u.y * (v.x * w.z - v.z * w.x) +
           u.z * (v.x * w.y - v.y * w.x);
  }
}

/// 4x4 determinant of rows (p - e, |p - e|^2) for p in a, b, c, d, expanded
/// along the lift column.
template <class T, bool Abs = false>
T lifted_det(const std::array<P3<T>, 4>& r) {
  auto lift = [](const P3<T>& p) -> T { return p.x * p.x + p.y * p.y + p.z * p.z; };
  const T m0 = det3<T, Abs>(r[1], r[2], r[3]);
  const T m1 = det3<T, Abs>(r[0], r[2], r[3]);
  const T m2 = det3<T, Abs>(r[0], r[1], r[3]);
  const T m3 = det3<T, Abs>(r[0], r[1], r[2]);
  if constexpr (Abs) {
    return lift(r[0]) * m0 + lift(r[1]) * m1 + lift(r[2]) * m2 + lift(r[3]) * m3;
  } else {
    return -lift(r[0]) * m0 + lift(r[1]) * m1 - lift(r[2]) * m2 + lift(r[3]) * m3;
  }
}

P3<double> absd(const P3<double>& p) { return {std::abs(p.x), std::abs(p.y), std::abs(p.z)}; }

int orient_exact(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const auto A = to<mpq_class>(a);
  return sign_of<mpq_class>(det3(sub(to<mpq_class>(b), A), sub(to<mpq_class>(c), A),
                                 sub(to<mpq_class>(d), A)));
}

/// Raw lifted determinant sign; negative when e is inside the sphere of a
/// positively oriented abcd.
int lifted_sign(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e) {
  const auto E = to<double>(e);
  std::array<P3<double>, 4> r{sub(to<double>(a), E), sub(to<double>(b), E), sub(to<double>(c), E),
                              sub(to<double>(d), E)};
  const double det = lifted_det(r);
  const double perm =
      lifted_det<double, true>({absd(r[0]), absd(r[1]), absd(r[2]), absd(r[3])});
  if (std::abs(det) > 1e-13 * perm) return sign_of(det);
  const auto Eq = to<mpq_class>(e);
  std::array<P3<mpq_class>, 4> rq{sub(to<mpq_class>(a), Eq), sub(to<mpq_class>(b), Eq),
                                  sub(to<mpq_class>(c), Eq), sub(to<mpq_class>(d), Eq)};
  return sign_of<mpq_class>(lifted_det(rq));
}

}  // namespace

int orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const auto A = to<double>(a);
  const auto u = sub(to<double>(b), A);
  const auto v = sub(to<double>(c), A);
  const auto w = sub(to<double>(d), A);
  const double det = det3(u, v, w);
  const double perm = det3<double, true>(absd(u), absd(v), absd(w));
  if (std::abs(det) > 1e-14 * perm) return sign_of(det);
  return orient_exact(a, b, c, d);
}

int insphere(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e) {
  return -lifted_sign(a, b, c, d, e);
}

int coplanar_incircle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& e) {
  // Lift the problem to the sphere through a, b, c and a point s off their
  // plane on the positive side; e lies in the plane, so it is inside that
  // sphere exactly when it is inside the circumcircle.
  const auto A = to<mpq_class>(a);
  const auto u = sub(to<mpq_class>(b), A);
  const auto v = sub(to<mpq_class>(c), A);
  const P3<mpq_class> n{u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x};
  const P3<mpq_class> s{A.x + n.x, A.y + n.y, A.z + n.z};
  const auto E = to<mpq_class>(e);
  std::array<P3<mpq_class>, 4> r{sub(A, E), sub(to<mpq_class>(b), E), sub(to<mpq_class>(c), E),
                                 sub(s, E)};
  return -sign_of<mpq_class>(lifted_det(r));
}

int coplanar_orient(const Vec3& a, const Vec3& b, const Vec3& c, int drop_axis) {
  const int i = (drop_axis + 1) % 3;
  const int j = (drop_axis + 2) % 3;
  const mpq_class ux = mpq_class(b[i]) - a[i], uy = mpq_class(b[j]) - a[j];
  const mpq_class vx = mpq_class(c[i]) - a[i], vy = mpq_class(c[j]) - a[j];
  return sgn(ux * vy - uy * vx);
}

bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

int insphere_perturbed(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e) {
  const int s = insphere(a, b, c, d, e);
  if (s != 0) return s;
  const std::array<const Vec3*, 5> p{&a, &b, &c, &d, &e};
  std::array<int, 5> order{0, 1, 2, 3, 4};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return lex_less(*p[i], *p[j]); });
  // Leading terms of the perturbed determinant, largest perturbation first.
  for (int i = 4; i > 1; --i) {
    int o = 0;
    switch (order[i]) {
      case 4: return -1;
      case 3: o = orient3d(a, b, c, e); break;
      case 2: o = orient3d(a, b, e, d); break;
      case 1: o = orient3d(a, e, c, d); break;
      case 0: o = orient3d(e, b, c, d); break;
    }
    if (o != 0) return o;
  }
  return -1;
}

int coplanar_incircle_perturbed(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& e) {
  const int s = coplanar_incircle(a, b, c, e);
  if (s != 0) return s;
  const Vec3 n = (b - a).cross(c - a);
  int drop = 0;
  n.cwiseAbs().maxCoeff(&drop);
  const int ref = coplanar_orient(a, b, c, drop);
  const std::array<const Vec3*, 4> p{&a, &b, &c, &e};
  std::array<int, 4> order{0, 1, 2, 3};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return lex_less(*p[i], *p[j]); });
  for (int i = 3; i > 0; --i) {
    int o = 0;
    switch (order[i]) {
      case 3: return -1;
      case 2: o = coplanar_orient(a, b, e, drop); break;
      case 1: o = coplanar_orient(a, e, c, drop); break;
      case 0: o = coplanar_orient(e, b, c, drop); break;
    }
    if (o != 0) return o * ref;
  }
  return -1;
}

}  // namespace ikk::detail

namespace ikk::predicates {

int orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return detail::orient3d(a, b, c, d);
}

int insphere(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e) {
  return detail::insphere(a, b, c, d, e);
}

}  // namespace ikk::predicates
