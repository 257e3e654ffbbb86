#include <algorithm>
#include <array>
#include <map>
#include <set>

#include <Eigen/SVD>

#include "geometry.hpp"
#include "ikk/errors.hpp"
#include "ikk/interp.hpp"

namespace ikk {

namespace {

constexpr int kInfinite = -1;

struct Cell {
  std::array<int, 4> v;
  bool alive = true;
};

class Triangulator {
 public:
  explicit Triangulator(std::span<const Vec3> pts) : pts_(pts.begin(), pts.end()) {}

  Delaunay run() {
    const auto seed = initial_tetrahedron();
    std::array<int, 4> t = seed;
    if (detail::orient3d(pts_[t[0]], pts_[t[1]], pts_[t[2]], pts_[t[3]]) < 0) std::swap(t[0], t[1]);
    cells_.push_back({t});
    for (int k = 0; k < 4; ++k) {
      // Replace vertex k by infinity; swapping two finite vertices flips the
      // orientation so that a point beyond the facet tests positive.
      std::array<int, 4> g = t;
      g[k] = kInfinite;
      const int i = (k + 1) % 4;
      const int j = (k + 2) % 4;
      std::swap(g[i], g[j]);
      cells_.push_back({g});
    }
    std::set<int> used(seed.begin(), seed.end());
    for (int p = 0; p < static_cast<int>(pts_.size()); ++p) {
      if (!used.count(p)) insert(p);
    }
    return collect();
  }

 private:
  const Vec3& at(int i) const { return pts_[i]; }

  std::array<int, 4> initial_tetrahedron() const {
    const int n = static_cast<int>(pts_.size());
    int i1 = -1, i2 = -1, i3 = -1;
    for (int i = 1; i < n && i1 < 0; ++i) {
      if (pts_[i] != pts_[0]) i1 = i;
    }
    for (int i = 1; i < n && i1 >= 0 && i2 < 0; ++i) {
      if ((pts_[i1] - pts_[0]).cross(pts_[i] - pts_[0]).squaredNorm() > 0.0) i2 = i;
    }
    for (int i = 1; i < n && i2 >= 0 && i3 < 0; ++i) {
      if (detail::orient3d(pts_[0], pts_[i1], pts_[i2], pts_[i]) != 0) i3 = i;
    }
    if (i3 < 0) throw ConstructionError("node positions are coplanar");
    return {0, i1, i2, i3};
  }

  bool in_conflict(const Cell& c, int p) const {
    const auto& v = c.v;
    const int inf = static_cast<int>(std::find(v.begin(), v.end(), kInfinite) - v.begin());
    if (inf == 4) {
      return detail::insphere_perturbed(at(v[0]), at(v[1]), at(v[2]), at(v[3]), at(p)) > 0;
    }
    std::array<Vec3, 4> q;
    for (int k = 0; k < 4; ++k) q[k] = k == inf ? at(p) : at(v[k]);
    const int o = detail::orient3d(q[0], q[1], q[2], q[3]);
    if (o != 0) return o > 0;
    std::array<Vec3, 3> f;
    int m = 0;
    for (int k = 0; k < 4; ++k) {
      if (k != inf) f[m++] = at(v[k]);
    }
    return detail::coplanar_incircle_perturbed(f[0], f[1], f[2], at(p)) > 0;
  }

  void insert(int p) {
    std::vector<int> conflict;
    for (int c = 0; c < static_cast<int>(cells_.size()); ++c) {
      if (cells_[c].alive && in_conflict(cells_[c], p)) conflict.push_back(c);
    }
    if (conflict.empty()) throw ConstructionError("point insertion found no conflicting cell");
    // Boundary faces appear in exactly one conflicting cell.
    std::map<std::array<int, 3>, std::pair<int, int>> faces;  // key -> (cell, opposite index)
    std::map<std::array<int, 3>, int> count;
    for (int c : conflict) {
      for (int k = 0; k < 4; ++k) {
        std::array<int, 3> key;
        int m = 0;
        for (int j = 0; j < 4; ++j) {
          if (j != k) key[m++] = cells_[c].v[j];
        }
        std::sort(key.begin(), key.end());
        ++count[key];
        faces[key] = {c, k};
      }
    }
    for (const auto& [key, n] : count) {
      if (n != 1) continue;
      const auto [c, k] = faces[key];
      Cell fresh = cells_[c];
      fresh.v[k] = p;
      fresh.alive = true;
      added_.push_back(fresh);
    }
    for (int c : conflict) cells_[c].alive = false;
    for (auto& c : added_) cells_.push_back(c);
    added_.clear();
  }

  Delaunay collect() const {
    Delaunay d;
    d.points = pts_;
    for (const auto& c : cells_) {
      if (!c.alive) continue;
      if (std::find(c.v.begin(), c.v.end(), kInfinite) == c.v.end()) {
        d.tetrahedra.push_back(c.v);
      }
    }
    std::sort(d.tetrahedra.begin(), d.tetrahedra.end());
    const Vec3 inside = [&] {
      const auto& t = d.tetrahedra.front();
      return 0.25 * (at(t[0]) + at(t[1]) + at(t[2]) + at(t[3]));
    }();
    for (const auto& c : cells_) {
      if (!c.alive) continue;
      if (std::find(c.v.begin(), c.v.end(), kInfinite) == c.v.end()) continue;
      Facet f;
      int m = 0;
      for (int v : c.v) {
        if (v != kInfinite) f[m++] = v;
      }
      // Orient outward: a point inside the hull must test negative. The
      // centroid of a finite cell is strictly inside, never on a hull plane.
      if (detail::orient3d(at(f[0]), at(f[1]), at(f[2]), inside) > 0) std::swap(f[0], f[1]);
      d.hull.push_back(f);
    }
    std::sort(d.hull.begin(), d.hull.end());
    return d;
  }

  std::vector<Vec3> pts_;
  std::vector<Cell> cells_;
  std::vector<Cell> added_;
};

}  // namespace

Delaunay delaunay_tetrahedralize(std::span<const Vec3> points) {
  if (points.size() < 4) throw ConstructionError("a tetrahedralization needs at least 4 nodes");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) throw ConstructionError("node position is not finite");
    for (std::size_t j = 0; j < i; ++j) {
      if (points[i] == points[j]) {
        throw ConstructionError("duplicate node position (nodes " + std::to_string(j) + " and " +
                                std::to_string(i) + ")");
      }
    }
  }
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  MatX X(points.size(), 3);
  for (std::size_t i = 0; i < points.size(); ++i) X.row(i) = (points[i] - mean).transpose();
  Eigen::JacobiSVD<MatX> svd(X);
  const auto& s = svd.singularValues();
  if (!(s[0] > 0.0) || s[2] / s[0] < 1e-9) {
    throw ConstructionError("node positions are (nearly) coplanar; the volume would be flat");
  }
  return Triangulator(points).run();
}

}  // namespace ikk
