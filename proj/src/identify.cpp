#include "ikk/identify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <queue>

#include <Eigen/Eigenvalues>

#include "ikk/errors.hpp"
#include "ikk/logging.hpp"

namespace ikk {

namespace {

int nearest(const std::vector<Vec3>& centroids, const Vec3& p, double* dist2 = nullptr) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = (centroids[c] - p).squaredNorm();
    if (d < bd) {
      bd = d;
      best = static_cast<int>(c);
    }
  }
  if (dist2) *dist2 = bd;
  return best;
}

void canonical_sign(MatX& cols) {
  for (int c = 0; c < cols.cols(); ++c) {
    Eigen::Index idx = 0;
    cols.col(c).cwiseAbs().maxCoeff(&idx);
    if (cols(idx, c) < 0.0) cols.col(c) = -cols.col(c);
  }
}

nlohmann::json vec_json(const VecX& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

VecX vec_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
}

SignalMode mode_from_string(const std::string& s) {
  if (s == "OnePC") return SignalMode::OnePC;
  if (s == "TwoPC") return SignalMode::TwoPC;
  throw ValidationError("unknown signal mode '" + s + "'");
}

}  // namespace

BoundingBox bounding_box(std::span<const Vec3> points) {
  if (points.empty()) throw InsufficientData("bounding box of an empty point set");
  BoundingBox b{points.front(), points.front()};
  for (const auto& p : points) {
    b.min = b.min.cwiseMin(p);
    b.max = b.max.cwiseMax(p);
  }
  return b;
}

std::vector<Vec3> box_surface_seeds(const BoundingBox& box) {
  const Vec3& a = box.min;
  const Vec3& b = box.max;
  const Vec3 c = 0.5 * (a + b);
  return {
      {a.x(), a.y(), a.z()}, {b.x(), a.y(), a.z()}, {a.x(), b.y(), a.z()}, {b.x(), b.y(), a.z()},
      {a.x(), a.y(), b.z()}, {b.x(), a.y(), b.z()}, {a.x(), b.y(), b.z()}, {b.x(), b.y(), b.z()},
      {c.x(), c.y(), b.z()}, {c.x(), c.y(), a.z()},
      {b.x(), c.y(), c.z()}, {a.x(), c.y(), c.z()},
      {c.x(), b.y(), c.z()}, {c.x(), a.y(), c.z()},
  };
}

ClusterSet kmeans(std::span<const Vec3> points, int k, int max_iter,
                  const std::vector<Vec3>& initial_centroids) {
  if (k < 1) throw ContractViolation("k-means needs k >= 1");
  if (points.size() < static_cast<std::size_t>(k)) {
    throw InsufficientData("k-means: " + std::to_string(points.size()) + " points for " +
                           std::to_string(k) + " clusters");
  }
  ClusterSet cs;
  if (!initial_centroids.empty()) {
    if (initial_centroids.size() != static_cast<std::size_t>(k)) {
      throw ContractViolation("k-means: initial centroid count differs from k");
    }
    cs.centroids = initial_centroids;
  } else {
    auto seeds = box_surface_seeds(bounding_box(points));
    seeds.resize(std::min<std::size_t>(seeds.size(), k));
    while (seeds.size() < static_cast<std::size_t>(k)) {
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        double d = 0.0;
        nearest(seeds, points[i], &d);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      seeds.push_back(points[far]);
    }
    cs.centroids = std::move(seeds);
  }

  const std::size_t m = points.size();
  cs.assignment.assign(m, 0);
  auto assign = [&] {
    double inertia = 0.0;
    bool changed = false;
    for (std::size_t i = 0; i < m; ++i) {
      double d = 0.0;
      const int c = nearest(cs.centroids, points[i], &d);
      changed |= c != cs.assignment[i];
      cs.assignment[i] = c;
      inertia += d;
    }
    cs.inertia = inertia;
    return changed;
  };
  assign();

  while (cs.iterations < max_iter) {
    std::vector<Vec3> sum(k, Vec3::Zero());
    std::vector<int> count(k, 0);
    for (std::size_t i = 0; i < m; ++i) {
      sum[cs.assignment[i]] += points[i];
      ++count[cs.assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) {
        cs.centroids[c] = sum[c] / count[c];
        continue;
      }
      // Empty cluster: restart it on the point worst served by its centroid.
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = (points[i] - cs.centroids[cs.assignment[i]]).squaredNorm();
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      cs.centroids[c] = points[far];
      cs.assignment[far] = c;
      log().debug("k-means: cluster {} emptied, re-seeded at point {}", c, far);
    }
    const bool changed = assign();
    ++cs.iterations;
    cs.inertia_trace.push_back(cs.inertia);
    if (!changed) break;
  }
  return cs;
}

std::vector<Frame> select_neighborhood(std::span<const Frame> frames, const Vec3& centre,
                                       double radius) {
  if (!(radius > 0.0)) throw ContractViolation("neighbourhood radius must be positive");
  std::vector<Frame> out;
  for (const auto& f : frames) {
    if ((f.hand.position - centre).norm() <= radius) out.push_back(f);
  }
  const std::size_t dof = frames.empty() ? 0 : static_cast<std::size_t>(frames.front().q.size());
  if (out.size() < dof + 1 || out.empty()) {
    throw InsufficientData("only " + std::to_string(out.size()) + " frames within " +
                           std::to_string(radius) + " m of the node");
  }
  return out;
}

PrincipalBasis pca(const MatX& samples) {
  const auto m = samples.rows();
  const auto n = samples.cols();
  if (m < 2 || n < 1) throw InsufficientData("PCA needs at least two samples");
  PrincipalBasis pb;
  pb.mean = samples.colwise().mean().transpose();
  const MatX centred = samples.rowwise() - pb.mean.transpose();
  const MatX cov = centred.transpose() * centred / static_cast<double>(m - 1);
  Eigen::SelfAdjointEigenSolver<MatX> es(cov);
  if (es.info() != Eigen::Success) throw DegenerateRange("covariance eigen-decomposition failed");
  pb.eigenvalues = es.eigenvalues().reverse().cwiseMax(0.0);
  pb.components = es.eigenvectors().rowwise().reverse();
  canonical_sign(pb.components);
  const double total = pb.eigenvalues.sum();
  pb.explained_variance_ratio =
      total > 0.0 ? VecX(pb.eigenvalues / total) : VecX(VecX::Zero(n));
  return pb;
}

PrincipalBasis pca(std::span<const JointVector> samples) {
  if (samples.empty()) throw InsufficientData("PCA needs at least two samples");
  MatX X(samples.size(), samples.front().size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != X.cols()) throw ContractViolation("samples differ in dimension");
    X.row(static_cast<Eigen::Index>(i)) = samples[i].transpose();
  }
  return pca(X);
}

SignalBasis choose_signal_basis(const PrincipalBasis& basis, const Vec3& node_position,
                                double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ContractViolation("variance threshold must be in (0, 1]");
  const auto n = basis.components.cols();
  SignalBasis sb;
  sb.node_position = node_position;
  sb.mean = basis.mean;
  sb.explained_variance_ratio.assign(basis.explained_variance_ratio.data(),
                                     basis.explained_variance_ratio.data() + n);
  if (basis.explained_variance_ratio[0] >= threshold || n < 2) {
    sb.mode = SignalMode::OnePC;
    sb.directions = basis.components.leftCols(1);
  } else {
    sb.mode = SignalMode::TwoPC;
    sb.directions = basis.components.leftCols(2);
  }
  return sb;
}

double signal_coordinate(const SignalBasis& basis, const JointVector& q) {
  if (q.size() != basis.mean.size()) throw ContractViolation("joint vector size mismatch");
  const VecX p = basis.directions.transpose() * (q - basis.mean);
  return basis.mode == SignalMode::OnePC ? p[0] : p.norm();
}

SignalBasis projection_range(std::span<const Frame> frames, SignalBasis basis) {
  if (frames.empty()) throw InsufficientData("no frames for the projection range");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& f : frames) {
    const double c = signal_coordinate(basis, f.q);
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  if (!(hi - lo > 1e-9)) {
    throw DegenerateRange("node " + basis.label + ": projection range is empty");
  }
  basis.range_min = lo;
  basis.range_max = hi;
  return basis;
}

std::vector<int> minimum_spanning_tree(std::span<const Vec3> nodes) {
  const std::size_t n = nodes.size();
  std::vector<int> parent(n, -1);
  if (n == 0) return parent;
  std::vector<bool> in(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  best[0] = 0.0;
  for (std::size_t step = 0; step < n; ++step) {
    int u = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in[i] && (u < 0 || best[i] < best[u])) u = static_cast<int>(i);
    }
    in[u] = true;
    for (std::size_t v = 0; v < n; ++v) {
      if (in[v]) continue;
      const double d = (nodes[u] - nodes[v]).norm();
      if (d < best[v]) {
        best[v] = d;
        parent[v] = u;
      }
    }
  }
  return parent;
}

std::vector<SignalBasis> align_signs(std::vector<SignalBasis> bases) {
  const std::size_t n = bases.size();
  if (n < 2) return bases;
  std::vector<Vec3> pos;
  for (const auto& b : bases) pos.push_back(b.node_position);
  const auto parent = minimum_spanning_tree(pos);
  std::vector<std::vector<int>> children(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (parent[i] >= 0) children[parent[i]].push_back(static_cast<int>(i));
  }
  std::queue<int> todo;
  todo.push(0);
  while (!todo.empty()) {
    const int p = todo.front();
    todo.pop();
    for (int c : children[p]) {
      auto& b = bases[c];
      const auto& ref = bases[p];
      if (b.directions.col(0).dot(ref.directions.col(0)) < 0.0) {
        b.directions.col(0) = -b.directions.col(0);
        if (b.mode == SignalMode::OnePC) {
          const double lo = b.range_min;
          b.range_min = -b.range_max;
          b.range_max = -lo;
        }
      }
      if (b.directions.cols() > 1 && ref.directions.cols() > 1 &&
          b.directions.col(1).dot(ref.directions.col(1)) < 0.0) {
        b.directions.col(1) = -b.directions.col(1);
      }
      todo.push(c);
    }
  }
  return bases;
}

std::vector<SignalBasis> identify_session(const CalibrationSession& session,
                                          const IdentifyConfig& config) {
  if (session.points.empty()) throw InsufficientData("calibration session has no points");
  const int dof = session.model.dof();
  std::vector<Frame> steady;
  std::vector<int> owner;
  for (std::size_t p = 0; p < session.points.size(); ++p) {
    const auto& point = session.points[p];
    const auto segments = segment_steady(point.recording, config.steady);
    std::size_t count = 0;
    for (const auto& seg : segments) {
      for (std::size_t i = seg.begin; i < seg.end; ++i) {
        const auto& f = point.recording.frames[i];
        if (f.q.size() != dof) throw ValidationError("point " + point.label + ": joint count mismatch");
        steady.push_back(f);
        owner.push_back(static_cast<int>(p));
        ++count;
      }
    }
    if (count == 0) {
      throw InsufficientData("point " + point.label + ": no steady frames (hand never below " +
                             std::to_string(config.steady.v_lin_max) + " m/s)");
    }
  }

  const int k = static_cast<int>(session.points.size());
  std::vector<Vec3> positions;
  positions.reserve(steady.size());
  for (const auto& f : steady) positions.push_back(f.hand.position);
  const auto clusters = kmeans(positions, k, config.kmeans_max_iter);

  // Majority cluster of each recording.
  std::vector<int> cluster_of(k, -1);
  std::vector<int> taken(k, -1);
  for (int p = 0; p < k; ++p) {
    std::vector<int> votes(k, 0);
    for (std::size_t i = 0; i < steady.size(); ++i) {
      if (owner[i] == p) ++votes[clusters.assignment[i]];
    }
    const int c = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    if (taken[c] >= 0) {
      throw ValidationError("points " + session.points[taken[c]].label + " and " +
                            session.points[p].label + " fall into the same workspace cluster");
    }
    taken[c] = p;
    cluster_of[p] = c;
  }

  std::vector<SignalBasis> bases;
  std::vector<PrincipalBasis> principal;
  std::vector<std::vector<Frame>> hoods;
  for (int p = 0; p < k; ++p) {
    const auto& label = session.points[p].label;
    const Vec3 centre = clusters.centroids[cluster_of[p]];
    std::vector<Frame> hood;
    try {
      hood = select_neighborhood(steady, centre, config.neighborhood_radius);
    } catch (const InsufficientData& e) {
      throw InsufficientData("node " + label + ": " + e.what());
    }
    std::vector<JointVector> qs;
    qs.reserve(hood.size());
    for (const auto& f : hood) qs.push_back(f.q);
    auto pb = pca(qs);
    auto sb = choose_signal_basis(pb, centre, config.variance_threshold);
    sb.label = label;
    bases.push_back(std::move(sb));
    principal.push_back(std::move(pb));
    hoods.push_back(std::move(hood));
  }

  const bool any_two = std::any_of(bases.begin(), bases.end(),
                                   [](const SignalBasis& b) { return b.mode == SignalMode::TwoPC; });
  for (int p = 0; p < k; ++p) {
    auto& b = bases[p];
    if (config.unify_modes && any_two && b.mode == SignalMode::OnePC) {
      b.mode = SignalMode::TwoPC;
      b.directions = principal[p].components.leftCols(2);
      log().info("node {}: promoted to TwoPC to match the other nodes", b.label);
    }
    b = projection_range(hoods[p], std::move(b));
  }
  return align_signs(std::move(bases));
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const SignalBasis& b) {
  nlohmann::json dirs = nlohmann::json::array();
  for (int c = 0; c < b.directions.cols(); ++c) dirs.push_back(vec_json(b.directions.col(c)));
  return {
      {"label", b.label},
      {"position", {b.node_position.x(), b.node_position.y(), b.node_position.z()}},
      {"mode", to_string(b.mode)},
      {"mean", vec_json(b.mean)},
      {"directions", dirs},
      {"range", {b.range_min, b.range_max}},
      {"explained_variance_ratio", b.explained_variance_ratio},
  };
}

SignalBasis signal_basis_from_json(const nlohmann::json& j) {
  try {
    SignalBasis b;
    b.label = j.value("label", std::string{});
    const auto pos = j.at("position").get<std::vector<double>>();
    if (pos.size() != 3) throw ValidationError("node position needs 3 coordinates");
    b.node_position = Vec3(pos[0], pos[1], pos[2]);
    b.mode = mode_from_string(j.at("mode").get<std::string>());
    b.mean = vec_from_json(j.at("mean"));
    const auto& dirs = j.at("directions");
    const std::size_t want = b.mode == SignalMode::OnePC ? 1 : 2;
    if (dirs.size() != want) throw ValidationError("node " + b.label + ": wrong number of directions");
    b.directions.resize(b.mean.size(), static_cast<Eigen::Index>(want));
    for (std::size_t c = 0; c < want; ++c) {
      const VecX d = vec_from_json(dirs[c]);
      if (d.size() != b.mean.size()) throw ValidationError("node " + b.label + ": direction size mismatch");
      b.directions.col(static_cast<Eigen::Index>(c)) = d;
    }
    const auto range = j.at("range").get<std::vector<double>>();
    if (range.size() != 2 || !(range[1] > range[0])) {
      throw ValidationError("node " + b.label + ": range must be [min, max] with max > min");
    }
    b.range_min = range[0];
    b.range_max = range[1];
    if (j.contains("explained_variance_ratio")) {
      b.explained_variance_ratio = j["explained_variance_ratio"].get<std::vector<double>>();
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed basis node: ") + e.what());
  }
}

nlohmann::json bases_to_json(const std::vector<SignalBasis>& bases,
                             const std::optional<IdentifyConfig>& config) {
  nlohmann::json doc;
  doc["schema"] = "ikk-basis/1";
  doc["nodes"] = nlohmann::json::array();
  for (const auto& b : bases) doc["nodes"].push_back(to_json(b));
  if (config) {
    doc["config"] = {
        {"v_lin_max", config->steady.v_lin_max},
        {"v_ang_max", config->steady.v_ang_max},
        {"window", config->steady.window},
        {"min_len", config->steady.min_len},
        {"neighborhood_radius", config->neighborhood_radius},
        {"variance_threshold", config->variance_threshold},
        {"kmeans_max_iter", config->kmeans_max_iter},
        {"unify_modes", config->unify_modes},
    };
  }
  return doc;
}

std::vector<SignalBasis> bases_from_json(const nlohmann::json& doc) {
  if (doc.value("schema", std::string{}) != "ikk-basis/1") {
    throw ValidationError("not an ikk-basis/1 document");
  }
  std::vector<SignalBasis> out;
  for (const auto& n : doc.at("nodes")) out.push_back(signal_basis_from_json(n));
  if (out.empty()) throw ValidationError("basis file has no nodes");
  return out;
}

void save_bases(const std::vector<SignalBasis>& bases, const std::filesystem::path& path,
                const std::optional<IdentifyConfig>& config) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << bases_to_json(bases, config).dump(2) << '\n';
}

std::vector<SignalBasis> load_bases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open basis file " + path.string());
  try {
    return bases_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 1);
  }
}

}  // namespace ikk
