#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ikk/identify.hpp"

namespace ikk {

using Tetrahedron = std::array<int, 4>;
using Facet = std::array<int, 3>;

/// Delaunay tetrahedralization of a small point set, built by incremental
/// Bowyer-Watson insertion with exact orientation/insphere predicates.
/// Cospherical and coplanar ties are broken by a symbolic perturbation of
/// the lifting map ordered lexicographically by coordinates, so the result
/// does not depend on insertion order.
struct Delaunay {
  std::vector<Vec3> points;
  /// Positively oriented finite tetrahedra.
  std::vector<Tetrahedron> tetrahedra;
  /// Convex hull facets, oriented so that orient3d(facet, x) > 0 outside.
  std::vector<Facet> hull;
};

Delaunay delaunay_tetrahedralize(std::span<const Vec3> points);

/// Stand-alone geometric predicates (exact sign, adaptive).
namespace predicates {
/// Sign of det[b-a, c-a, d-a].
int orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);
/// +1 when e lies inside the circumsphere of the positively oriented tet abcd.
int insphere(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e);
}  // namespace predicates

struct InterpolationVolume {
  std::vector<SignalBasis> nodes;
  Delaunay triangulation;
  SignalMode mode = SignalMode::OnePC;
  /// Per-tetrahedron circumcentre and squared radius.
  std::vector<Vec3> circumcentres;
  std::vector<double> circumradii2;
  /// Delaunay neighbours of every node.
  std::vector<std::vector<int>> adjacency;
  double scale = 1.0;

  int dof() const { return nodes.empty() ? 0 : static_cast<int>(nodes.front().mean.size()); }
  const std::vector<Tetrahedron>& tetrahedra() const { return triangulation.tetrahedra; }
};

InterpolationVolume build_volume(std::vector<SignalBasis> bases);

/// Strictly inside the convex hull of the nodes.
bool strictly_inside_hull(const InterpolationVolume& volume, const Vec3& x);

struct SibsonResult {
  bool inside_hull = false;
  std::vector<double> weights;         ///< per node, sums to 1
  std::vector<double> stolen_volumes;  ///< per node, m^3
  double cell_volume = 0.0;            ///< volume of the query's Voronoi cell
};

/// Natural-neighbour (Sibson) coordinates of `query`. Outside the hull the
/// result has inside_hull = false and empty weights.
SibsonResult sibson_weights(const InterpolationVolume& volume, const Vec3& query);

struct InterpolatedBasis {
  SignalMode mode = SignalMode::OnePC;
  VecX mean;
  MatX directions;
  double range_min = 0.0;
  double range_max = 0.0;
  std::vector<double> weights;
  bool inside_hull = false;
  double span() const { return range_max - range_min; }
};

/// Sibson blend of the node bases inside the hull; inverse-distance (power 2)
/// blend of the 4 nearest nodes outside it.
InterpolatedBasis interpolate_basis(const InterpolationVolume& volume, const Vec3& hand_pos);

// JSON, schema "ikk-volume/1". Loading accepts a basis file as well.
nlohmann::json to_json(const InterpolationVolume& volume);
InterpolationVolume volume_from_json(const nlohmann::json& doc);
void save_volume(const InterpolationVolume& volume, const std::filesystem::path& path);
InterpolationVolume load_volume(const std::filesystem::path& path);

}  // namespace ikk
