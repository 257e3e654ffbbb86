#include <doctest.h>

#include <filesystem>
#include <random>

#include "ikk/errors.hpp"
#include "ikk/interp.hpp"
#include "fixtures.hpp"

using namespace ikk;

namespace {

/// Direction field rotating about the third joint axis as x increases.
VecX field(const Vec3& p) {
  const double th = 0.5 * p.x() + 0.3 * p.y();
  VecX d = VecX::Zero(4);
  d << std::cos(th), std::sin(th), 0.0, 0.0;
  return d;
}

SignalBasis node(const Vec3& p, const std::string& label) {
  SignalBasis b;
  b.label = label;
  b.node_position = p;
  b.mean = VecX::Constant(4, p.x());
  b.directions = field(p);
  b.range_min = -1.0 - p.y();
  b.range_max = 1.0 + p.z();
  return b;
}

InterpolationVolume field_volume(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SignalBasis> bases;
  for (int i = 0; i < 8; ++i) bases.push_back(node(Vec3(i & 1, (i >> 1) & 1, (i >> 2) & 1), "C" + std::to_string(i)));
  for (int i = 8; i < n; ++i) bases.push_back(node(Vec3(u(rng), u(rng), u(rng)), "R" + std::to_string(i)));
  return build_volume(bases);
}

double angle_deg(const VecX& a, const VecX& b) {
  return std::acos(std::clamp(std::abs(a.normalized().dot(b.normalized())), 0.0, 1.0)) * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("regular tetrahedron centre weighs every node equally") {
  const double s = 1.0 / std::sqrt(2.0);
  std::vector<SignalBasis> b{node(Vec3(1, 0, -s), "a"), node(Vec3(-1, 0, -s), "b"), node(Vec3(0, 1, s), "c"),
                             node(Vec3(0, -1, s), "d")};
  const auto vol = build_volume(b);
  const auto r = sibson_weights(vol, Vec3(0, 0, 0));
  REQUIRE(r.inside_hull);
  for (double w : r.weights) CHECK(w == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("Sibson coordinates") {
  const auto vol = field_volume(20, 3);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int k = 0; k < 50; ++k) {
    const Vec3 x(u(rng), u(rng), u(rng));
    const auto r = sibson_weights(vol, x);
    REQUIRE(r.inside_hull);
    double sum = 0.0;
    Vec3 recon = Vec3::Zero();
    for (std::size_t i = 0; i < r.weights.size(); ++i) {
      CHECK(r.weights[i] >= 0.0);
      sum += r.weights[i];
      recon += r.weights[i] * vol.nodes[i].node_position;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((recon - x).norm() < 1e-9);
    double stolen = 0.0;
    for (double v : r.stolen_volumes) stolen += v;
    CHECK(stolen == doctest::Approx(r.cell_volume).epsilon(1e-9));
  }
  SUBCASE("a node reproduces itself") {
    for (std::size_t i = 0; i < vol.nodes.size(); ++i) {
      const auto r = sibson_weights(vol, vol.nodes[i].node_position);
      CHECK(r.inside_hull);
      for (std::size_t j = 0; j < r.weights.size(); ++j) CHECK(r.weights[j] == doctest::Approx(i == j ? 1.0 : 0.0));
    }
  }
  SUBCASE("outside the hull") {
    const auto r = sibson_weights(vol, Vec3(1.5, 0.5, 0.5));
    CHECK_FALSE(r.inside_hull);
    CHECK(r.weights.empty());
    CHECK_FALSE(strictly_inside_hull(vol, Vec3(1.5, 0.5, 0.5)));
    CHECK(strictly_inside_hull(vol, Vec3(0.5, 0.5, 0.5)));
  }
}

TEST_CASE("interpolated basis") {
  const auto vol = field_volume(20, 3);
  SUBCASE("exact at the nodes") {
    for (const auto& n : vol.nodes) {
      const auto b = interpolate_basis(vol, n.node_position);
      CHECK(angle_deg(b.directions.col(0), n.directions.col(0)) < 1e-6);
      CHECK((b.mean - n.mean).norm() < 1e-9);
      CHECK(b.range_min == doctest::Approx(n.range_min));
      CHECK(b.range_max == doctest::Approx(n.range_max));
    }
  }
  SUBCASE("follows a smoothly rotating field") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    for (int k = 0; k < 200; ++k) {
      const Vec3 x(u(rng), u(rng), u(rng));
      const auto b = interpolate_basis(vol, x);
      CHECK(b.inside_hull);
      CHECK(angle_deg(b.directions.col(0), field(x)) <= 2.0);
      CHECK(std::abs(b.directions.col(0).norm() - 1.0) < 1e-12);
      // Affine quantities are reproduced exactly.
      CHECK(b.mean[0] == doctest::Approx(x.x()).epsilon(1e-9));
      CHECK(b.range_min == doctest::Approx(-1.0 - x.y()).epsilon(1e-9));
    }
  }
  SUBCASE("continuous along a 1 mm walk") {
    VecX prev;
    for (int k = 0; k <= 900; ++k) {
      const Vec3 x(0.05 + 0.001 * k, 0.3 + 0.0005 * k, 0.7 - 0.0004 * k);
      const auto b = interpolate_basis(vol, x);
      if (prev.size()) CHECK(angle_deg(b.directions.col(0), prev) < 0.1);
      prev = b.directions.col(0);
    }
  }
  SUBCASE("inverse-distance fallback outside the hull") {
    const Vec3 x(1.3, 0.2, 0.4);
    const auto b = interpolate_basis(vol, x);
    CHECK_FALSE(b.inside_hull);
    int used = 0;
    double sum = 0.0;
    for (double w : b.weights) {
      used += w > 0.0;
      sum += w;
    }
    CHECK(used == 4);
    CHECK(sum == doctest::Approx(1.0));
    std::vector<std::pair<double, int>> d;
    for (int i = 0; i < static_cast<int>(vol.nodes.size()); ++i) d.emplace_back((vol.nodes[i].node_position - x).norm(), i);
    std::sort(d.begin(), d.end());
    VecX blend = VecX::Zero(4);
    for (int m = 0; m < 4; ++m) blend += vol.nodes[d[m].second].directions.col(0) / (d[m].first * d[m].first);
    CHECK(angle_deg(b.directions.col(0), blend) < 1e-6);
  }
}

TEST_CASE("volume construction checks") {
  std::vector<SignalBasis> b{node(Vec3(0, 0, 0), "a"), node(Vec3(1, 0, 0), "b"), node(Vec3(0, 1, 0), "c")};
  CHECK_THROWS_AS(build_volume(b), ConstructionError);
  b.push_back(node(Vec3(0, 0, 1), "d"));
  CHECK_NOTHROW(build_volume(b));
  b[1].mode = SignalMode::TwoPC;
  b[1].directions = MatX::Identity(4, 2);
  CHECK_THROWS_AS(build_volume(b), ConstructionError);
}

TEST_CASE("volume JSON round trip") {
  const auto& vol = *fixture::volume42();
  const auto dir = std::filesystem::temp_directory_path() / "ikk_test_volume";
  std::filesystem::create_directories(dir);
  save_volume(vol, dir / "volume.json");
  const auto back = load_volume(dir / "volume.json");
  CHECK(back.tetrahedra() == vol.tetrahedra());
  CHECK(back.nodes.size() == vol.nodes.size());
  const Vec3 x = vol.nodes[0].node_position * 0.5 + vol.nodes[6].node_position * 0.5;
  const auto a = interpolate_basis(vol, x);
  const auto c = interpolate_basis(back, x);
  CHECK((a.directions - c.directions).norm() == 0.0);

  // A basis file is accepted as well.
  save_bases(fixture::bases42(), dir / "bases.json");
  CHECK(load_volume(dir / "bases.json").tetrahedra() == vol.tetrahedra());
  std::filesystem::remove_all(dir);
}
