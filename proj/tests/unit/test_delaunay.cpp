#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "ikk/errors.hpp"
#include "ikk/interp.hpp"
#include "oracles.hpp"

using namespace ikk;

namespace {

std::vector<Vec3> random_points(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> p;
  for (int i = 0; i < n; ++i) p.emplace_back(u(rng), u(rng), u(rng));
  return p;
}

std::vector<Tetrahedron> sorted_tets(const std::vector<Tetrahedron>& ts, const std::vector<int>& map = {}) {
  std::vector<Tetrahedron> out;
  for (auto t : ts) {
    if (!map.empty())
      for (auto& v : t) v = map[v];
    std::sort(t.begin(), t.end());
    out.push_back(t);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double tet_volume_sum(const Delaunay& d) {
  double v = 0.0;
  for (const auto& t : d.tetrahedra)
    v += oracle::orient(d.points[t[0]], d.points[t[1]], d.points[t[2]], d.points[t[3]]) / 6.0;
  return v;
}

/// Volume enclosed by outward-oriented facets (divergence theorem).
double hull_volume(const Delaunay& d) {
  double v = 0.0;
  for (const auto& f : d.hull) {
    v += d.points[f[0]].dot((d.points[f[1]] - d.points[f[0]]).cross(d.points[f[2]] - d.points[f[0]])) / 6.0;
  }
  return v;
}

}  // namespace

TEST_CASE("predicates") {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0), d(0, 0, 1);
  CHECK(predicates::orient3d(a, b, c, d) == 1);
  CHECK(predicates::orient3d(a, c, b, d) == -1);
  CHECK(predicates::orient3d(a, b, c, Vec3(0.3, 0.3, 0)) == 0);
  CHECK(predicates::insphere(a, b, c, d, Vec3(0.2, 0.2, 0.2)) == 1);
  CHECK(predicates::insphere(a, b, c, d, Vec3(2, 2, 2)) == -1);
  CHECK(predicates::insphere(a, b, c, d, Vec3(1, 1, 1)) == 0);
  // Nearly coplanar: floating determinant is unreliable, the exact sign is not.
  const Vec3 e(0.5, 0.5, 1e-300);
  CHECK(predicates::orient3d(a, b, c, e) == 1);
}

TEST_CASE("four points form one positively oriented tetrahedron") {
  const std::vector<Vec3> p{{0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {0, 0, 1}};
  const auto d = delaunay_tetrahedralize(p);
  REQUIRE(d.tetrahedra.size() == 1);
  const auto& t = d.tetrahedra[0];
  CHECK(oracle::orient(p[t[0]], p[t[1]], p[t[2]], p[t[3]]) > 0);
  CHECK(d.hull.size() == 4);
}

TEST_CASE("agrees with the empty-sphere enumeration") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto p = random_points(6 + static_cast<int>(seed) * 2, seed);
    const auto d = delaunay_tetrahedralize(p);
    CHECK(sorted_tets(d.tetrahedra) == oracle::brute_delaunay(p));
    for (const auto& t : d.tetrahedra) CHECK(oracle::orient(p[t[0]], p[t[1]], p[t[2]], p[t[3]]) > 0);
    CHECK(tet_volume_sum(d) == doctest::Approx(hull_volume(d)).epsilon(1e-12));
  }
}

TEST_CASE("insertion order does not matter") {
  const auto p = random_points(14, 99);
  const auto ref = sorted_tets(delaunay_tetrahedralize(p).tetrahedra);
  std::vector<int> perm(p.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Vec3> q;
    for (int i : perm) q.push_back(p[i]);
    CHECK(sorted_tets(delaunay_tetrahedralize(q).tetrahedra, perm) == ref);
  }
}

TEST_CASE("cospherical cube corners are triangulated consistently") {
  std::vector<Vec3> p;
  for (int i = 0; i < 8; ++i) p.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  const auto d = delaunay_tetrahedralize(p);
  CHECK(tet_volume_sum(d) == doctest::Approx(1.0).epsilon(1e-14));
  for (const auto& t : d.tetrahedra) CHECK(oracle::orient(p[t[0]], p[t[1]], p[t[2]], p[t[3]]) > 0);
  CHECK(d.hull.size() == 12);

  std::vector<int> perm{5, 2, 7, 0, 3, 6, 1, 4};
  std::vector<Vec3> q;
  for (int i : perm) q.push_back(p[i]);
  CHECK(sorted_tets(delaunay_tetrahedralize(q).tetrahedra, perm) == sorted_tets(d.tetrahedra));
}

TEST_CASE("convex hull facets") {
  const auto p = random_points(30, 17);
  const auto d = delaunay_tetrahedralize(p);
  std::set<int> hull_vertices;
  for (const auto& f : d.hull) {
    for (int v : f) hull_vertices.insert(v);
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(predicates::orient3d(p[f[0]], p[f[1]], p[f[2]], p[i]) <= 0);
    }
  }
  // Triangulated sphere: F = 2V - 4.
  CHECK(d.hull.size() == 2 * hull_vertices.size() - 4);
}

TEST_CASE("degenerate inputs are rejected") {
  CHECK_THROWS_AS(delaunay_tetrahedralize(random_points(3, 1)), ConstructionError);
  std::vector<Vec3> flat;
  for (int i = 0; i < 10; ++i) flat.emplace_back(i * 0.1, (i * 7 % 10) * 0.1, 0.0);
  CHECK_THROWS_AS(delaunay_tetrahedralize(flat), ConstructionError);
  auto dup = random_points(6, 2);
  dup.push_back(dup[3]);
  CHECK_THROWS_AS(delaunay_tetrahedralize(dup), ConstructionError);
}
