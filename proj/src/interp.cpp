#include "ikk/interp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <Eigen/LU>

#include "geometry.hpp"
#include "ikk/errors.hpp"

namespace ikk {

namespace detail {

Polyhedron Polyhedron::cube(const Vec3& c, double h) {
  auto v = [&](int i, int j, int k) { return Vec3(c.x() + i * h, c.y() + j * h, c.z() + k * h); };
  Polyhedron p;
  p.faces = {
      {v(-1, -1, -1), v(-1, 1, -1), v(1, 1, -1), v(1, -1, -1)},
      {v(-1, -1, 1), v(1, -1, 1), v(1, 1, 1), v(-1, 1, 1)},
      {v(-1, -1, -1), v(1, -1, -1), v(1, -1, 1), v(-1, -1, 1)},
      {v(-1, 1, -1), v(-1, 1, 1), v(1, 1, 1), v(1, 1, -1)},
      {v(-1, -1, -1), v(-1, -1, 1), v(-1, 1, 1), v(-1, 1, -1)},
      {v(1, -1, -1), v(1, 1, -1), v(1, 1, 1), v(1, -1, 1)},
  };
  return p;
}

void Polyhedron::clip(const Vec3& n, double d, double eps) {
  bool any_out = false;
  for (const auto& f : faces) {
    for (const auto& v : f) any_out |= n.dot(v) - d > eps;
  }
  if (!any_out) return;
  std::vector<std::vector<Vec3>> kept;
  std::vector<Vec3> cap;
  for (const auto& f : faces) {
    std::vector<Vec3> out;
    const std::size_t m = f.size();
    for (std::size_t i = 0; i < m; ++i) {
      const Vec3& a = f[i];
      const Vec3& b = f[(i + 1) % m];
      const double sa = n.dot(a) - d;
      const double sb = n.dot(b) - d;
      if (sa <= eps) {
        out.push_back(a);
        if (sa >= -eps) cap.push_back(a);
      }
      if ((sa < -eps && sb > eps) || (sa > eps && sb < -eps)) {
        const Vec3 x = a + (sa / (sa - sb)) * (b - a);
        out.push_back(x);
        cap.push_back(x);
      }
    }
    if (out.size() >= 3) kept.push_back(std::move(out));
  }
  // Cap polygon: unique points on the plane, ordered by angle.
  std::vector<Vec3> uniq;
  for (const auto& p : cap) {
    if (std::none_of(uniq.begin(), uniq.end(), [&](const Vec3& q) { return (p - q).norm() <= eps; })) {
      uniq.push_back(p);
    }
  }
  if (uniq.size() >= 3) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : uniq) c += p;
    c /= static_cast<double>(uniq.size());
    const Vec3 nn = n.normalized();
    const Vec3 u = nn.unitOrthogonal();
    const Vec3 w = nn.cross(u);
    std::sort(uniq.begin(), uniq.end(), [&](const Vec3& a, const Vec3& b) {
      return std::atan2((a - c).dot(w), (a - c).dot(u)) < std::atan2((b - c).dot(w), (b - c).dot(u));
    });
    kept.push_back(std::move(uniq));
  }
  faces = std::move(kept);
}

double Polyhedron::volume() const {
  if (empty()) return 0.0;
  Vec3 c = Vec3::Zero();
  std::size_t count = 0;
  for (const auto& f : faces) {
    for (const auto& v : f) {
      c += v;
      ++count;
    }
  }
  c /= static_cast<double>(count);
  double vol = 0.0;
  for (const auto& f : faces) {
    Vec3 area = Vec3::Zero();
    for (std::size_t i = 0; i < f.size(); ++i) area += f[i].cross(f[(i + 1) % f.size()]);
    vol += std::abs(0.5 * area.dot(f[0] - c)) / 3.0;
  }
  return vol;
}

}  // namespace detail

namespace {

/// Clip to the half-space closer to a than to b.
void clip_bisector(detail::Polyhedron& poly, const Vec3& a, const Vec3& b, double eps) {
  const Vec3 n = b - a;
  const double d = 0.5 * (b.squaredNorm() - a.squaredNorm());
  const double nn = n.norm();
  poly.clip(n / nn, d / nn, eps);
}

nlohmann::json vec3_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

InterpolationVolume build_volume(std::vector<SignalBasis> bases) {
  if (bases.size() < 4) throw ConstructionError("an interpolation volume needs at least 4 nodes");
  const auto n = bases.front().mean.size();
  for (const auto& b : bases) {
    if (b.mode != bases.front().mode) {
      throw ConstructionError("nodes mix OnePC and TwoPC signal bases (node " + b.label + ")");
    }
    if (b.mean.size() != n) throw ConstructionError("node " + b.label + ": joint count differs");
    if (!(b.span() > 0.0)) throw ConstructionError("node " + b.label + ": empty projection range");
  }
  InterpolationVolume vol;
  vol.mode = bases.front().mode;
  std::vector<Vec3> pos;
  for (const auto& b : bases) pos.push_back(b.node_position);
  vol.triangulation = delaunay_tetrahedralize(pos);
  vol.nodes = std::move(bases);

  Vec3 lo = pos.front(), hi = pos.front();
  for (const auto& p : pos) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  vol.scale = (hi - lo).norm();

  std::vector<std::set<int>> adj(pos.size());
  for (const auto& t : vol.triangulation.tetrahedra) {
    Eigen::Matrix3d A;
    Vec3 rhs;
    for (int k = 0; k < 3; ++k) {
      const Vec3 e = pos[t[k + 1]] - pos[t[0]];
      A.row(k) = 2.0 * e.transpose();
      rhs[k] = e.squaredNorm();
    }
    const Vec3 rel = A.fullPivLu().solve(rhs);
    vol.circumcentres.push_back(pos[t[0]] + rel);
    vol.circumradii2.push_back(rel.squaredNorm());
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        if (a != b) adj[t[a]].insert(t[b]);
      }
    }
  }
  for (const auto& s : adj) vol.adjacency.emplace_back(s.begin(), s.end());
  return vol;
}

bool strictly_inside_hull(const InterpolationVolume& volume, const Vec3& x) {
  const auto& P = volume.triangulation.points;
  for (const auto& f : volume.triangulation.hull) {
    if (detail::orient3d(P[f[0]], P[f[1]], P[f[2]], x) >= 0) return false;
  }
  return true;
}

SibsonResult sibson_weights(const InterpolationVolume& volume, const Vec3& query) {
  SibsonResult res;
  const auto& P = volume.triangulation.points;
  const std::size_t n = P.size();
  const double at_node = 1e-12 * std::max(volume.scale, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if ((P[i] - query).norm() <= at_node) {
      res.inside_hull = true;
      res.weights.assign(n, 0.0);
      res.weights[i] = 1.0;
      res.stolen_volumes.assign(n, 0.0);
      return res;
    }
  }
  if (!strictly_inside_hull(volume, query)) return res;
  res.inside_hull = true;

  // Natural neighbours: vertices of every tetrahedron whose circumsphere
  // holds the query (inclusive, so a superset is fine).
  std::set<int> nat;
  for (std::size_t t = 0; t < volume.circumcentres.size(); ++t) {
    const double d2 = (volume.circumcentres[t] - query).squaredNorm();
    if (d2 <= volume.circumradii2[t] * (1.0 + 1e-9) + 1e-18) {
      for (int v : volume.triangulation.tetrahedra[t]) nat.insert(v);
    }
  }

  const double half = 1000.0 * std::max(volume.scale, 1e-6);
  const double eps = 1e-13 * half;
  auto cell = detail::Polyhedron::cube(query, half);
  for (int j : nat) clip_bisector(cell, query, P[j], eps);
  res.cell_volume = cell.volume();

  res.stolen_volumes.assign(n, 0.0);
  double total = 0.0;
  for (int i : nat) {
    auto part = cell;
    for (int j : volume.adjacency[i]) {
      clip_bisector(part, P[i], P[j], eps);
      if (part.empty()) break;
    }
    res.stolen_volumes[i] = part.volume();
    total += res.stolen_volumes[i];
  }
  if (!(total > 0.0)) throw DegenerateField("natural-neighbour cell has zero volume");
  res.weights.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) res.weights[i] = res.stolen_volumes[i] / total;
  return res;
}

InterpolatedBasis interpolate_basis(const InterpolationVolume& volume, const Vec3& hand_pos) {
  if (volume.nodes.empty()) throw ContractViolation("empty interpolation volume");
  const std::size_t n = volume.nodes.size();
  InterpolatedBasis out;
  out.mode = volume.mode;
  auto sib = sibson_weights(volume, hand_pos);
  if (sib.inside_hull) {
    out.weights = std::move(sib.weights);
    out.inside_hull = true;
  } else {
    // Inverse-distance blend of the four nearest nodes.
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < n; ++i) {
      d.emplace_back((volume.nodes[i].node_position - hand_pos).norm(), i);
    }
    const std::size_t k = std::min<std::size_t>(4, n);
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    out.weights.assign(n, 0.0);
    double sum = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      const double w = 1.0 / std::max(d[m].first * d[m].first, 1e-300);
      out.weights[d[m].second] = w;
      sum += w;
    }
    for (auto& w : out.weights) w /= sum;
  }

  const auto& first = volume.nodes.front();
  out.mean = VecX::Zero(first.mean.size());
  out.directions = MatX::Zero(first.directions.rows(), first.directions.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const double w = out.weights[i];
    if (w == 0.0) continue;
    const auto& b = volume.nodes[i];
    out.mean += w * b.mean;
    out.directions += w * b.directions;
    out.range_min += w * b.range_min;
    out.range_max += w * b.range_max;
  }
  const double n0 = out.directions.col(0).norm();
  if (!(n0 > 1e-12)) throw DegenerateField("interpolated direction vanished (opposing node signs)");
  out.directions.col(0) /= n0;
  if (out.directions.cols() > 1) {
    VecX d2 = out.directions.col(1);
    d2 -= d2.dot(out.directions.col(0)) * out.directions.col(0);
    const double n1 = d2.norm();
    if (!(n1 > 1e-12)) throw DegenerateField("interpolated second direction vanished");
    out.directions.col(1) = d2 / n1;
  }
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const InterpolationVolume& volume) {
  nlohmann::json doc;
  doc["schema"] = "ikk-volume/1";
  doc["mode"] = to_string(volume.mode);
  doc["nodes"] = nlohmann::json::array();
  for (const auto& b : volume.nodes) doc["nodes"].push_back(to_json(b));
  doc["tetrahedra"] = volume.triangulation.tetrahedra;
  doc["hull"] = volume.triangulation.hull;
  nlohmann::json cc = nlohmann::json::array();
  for (const auto& c : volume.circumcentres) cc.push_back(vec3_json(c));
  doc["circumcentres"] = cc;
  return doc;
}

InterpolationVolume volume_from_json(const nlohmann::json& doc) {
  const std::string schema = doc.value("schema", std::string{});
  if (schema == "ikk-basis/1") return build_volume(bases_from_json(doc));
  if (schema != "ikk-volume/1") throw ValidationError("not an ikk-volume/1 or ikk-basis/1 document");
  std::vector<SignalBasis> nodes;
  for (const auto& n : doc.at("nodes")) nodes.push_back(signal_basis_from_json(n));
  // The triangulation is a pure function of the node positions; rebuild it and
  // check the stored one agrees.
  auto vol = build_volume(std::move(nodes));
  if (doc.contains("tetrahedra")) {
    const auto stored = doc["tetrahedra"].get<std::vector<Tetrahedron>>();
    if (stored != vol.triangulation.tetrahedra) {
      throw ValidationError("stored tetrahedra do not match the node positions");
    }
  }
  return vol;
}

void save_volume(const InterpolationVolume& volume, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << to_json(volume).dump(2) << '\n';
}

InterpolationVolume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open volume file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 1);
  }
  return volume_from_json(doc);
}

}  // namespace ikk
