#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ikk/capture.hpp"
#include "ikk/types.hpp"

namespace ikk {

struct BoundingBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

BoundingBox bounding_box(std::span<const Vec3> points);

/// The 14 surface seeds of a box in k-means order: 8 corners, then the face
/// centres top (+z), bottom (-z), +x, -x, +y, -y.
std::vector<Vec3> box_surface_seeds(const BoundingBox& box);

struct ClusterSet {
  std::vector<Vec3> centroids;
  std::vector<int> assignment;
  int iterations = 0;
  double inertia = 0.0;
  /// Inertia after each Lloyd iteration; non-increasing.
  std::vector<double> inertia_trace;
};

/// Lloyd's k-means. Without explicit seeds the centroids start on the surface
/// of the data's bounding box (box_surface_seeds, truncated to k; beyond 14,
/// farthest-point seeding). An emptied cluster is re-seeded at the point
/// farthest from its centroid.
ClusterSet kmeans(std::span<const Vec3> points, int k, int max_iter = 100,
                  const std::vector<Vec3>& initial_centroids = {});

/// Frames whose hand position lies within `radius` of `centre`. Throws
/// InsufficientData when fewer than dof + 1 frames survive.
std::vector<Frame> select_neighborhood(std::span<const Frame> frames, const Vec3& centre,
                                       double radius);

struct PrincipalBasis {
  VecX mean;
  /// Columns are components, ordered by descending eigenvalue.
  MatX components;
  VecX eigenvalues;
  VecX explained_variance_ratio;
};

/// Covariance eigen-decomposition of joint samples (rows of `samples`).
/// Each component's largest-magnitude entry is made positive.
PrincipalBasis pca(const MatX& samples);
PrincipalBasis pca(std::span<const JointVector> samples);

struct SignalBasis {
  std::string label;
  Vec3 node_position = Vec3::Zero();
  SignalMode mode = SignalMode::OnePC;
  VecX mean;
  /// n x 1 (OnePC) or n x 2 (TwoPC), orthonormal columns.
  MatX directions;
  /// OnePC: projection range along the direction. TwoPC: radial range.
  double range_min = 0.0;
  double range_max = 0.0;
  std::vector<double> explained_variance_ratio;

  double span() const { return range_max - range_min; }
};

SignalBasis choose_signal_basis(const PrincipalBasis& basis, const Vec3& node_position,
                                double threshold = 0.80);

/// Signal-basis coordinate of q: the projection (OnePC) or the norm of the
/// two projections (TwoPC).
double signal_coordinate(const SignalBasis& basis, const JointVector& q);

SignalBasis projection_range(std::span<const Frame> frames, SignalBasis basis);

/// Sign alignment along the Euclidean minimum spanning tree of node
/// positions, rooted at node 0.
std::vector<SignalBasis> align_signs(std::vector<SignalBasis> bases);

/// Parent index of every node in the tree used by align_signs (-1 for root).
std::vector<int> minimum_spanning_tree(std::span<const Vec3> nodes);

struct IdentifyConfig {
  SteadyConfig steady;
  double neighborhood_radius = 0.05;
  double variance_threshold = 0.80;
  int kmeans_max_iter = 100;
  /// Promote every node to TwoPC when any node needs two components, so the
  /// interpolation volume sees a single mode.
  bool unify_modes = true;
};

std::vector<SignalBasis> identify_session(const CalibrationSession& session,
                                          const IdentifyConfig& config = {});

// JSON, schema "ikk-basis/1".
nlohmann::json bases_to_json(const std::vector<SignalBasis>& bases,
                             const std::optional<IdentifyConfig>& config = std::nullopt);
std::vector<SignalBasis> bases_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SignalBasis& b);
SignalBasis signal_basis_from_json(const nlohmann::json& j);
void save_bases(const std::vector<SignalBasis>& bases, const std::filesystem::path& path,
                const std::optional<IdentifyConfig>& config = std::nullopt);
std::vector<SignalBasis> load_bases(const std::filesystem::path& path);

}  // namespace ikk
