#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <Eigen/SVD>

#include "ikk/capture.hpp"
#include "ikk/errors.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ikk;
namespace fs = std::filesystem;

namespace {

Recording constant_velocity(double speed, std::size_t n, double rate = 100.0) {
  Recording r;
  r.rate_hz = rate;
  r.label = "cv";
  for (std::size_t k = 0; k < n; ++k) {
    Frame f;
    f.t = static_cast<double>(k) / rate;
    f.q = JointVector::Zero(7);
    f.hand.position = Vec3(0.3 + speed * f.t, 0.1, 0.0);
    r.frames.push_back(f);
  }
  return r;
}

/// Steady for 2 s, then 1 s at 0.2 m/s along x, repeated.
Recording alternating(int cycles) {
  Recording r;
  r.label = "alt";
  double x = 0.0;
  for (int k = 0; k < cycles * 300; ++k) {
    Frame f;
    f.t = k * 0.01;
    f.q = JointVector::Zero(7);
    if (k % 300 >= 200) x += 0.2 * 0.01;
    f.hand.position = Vec3(x, 0, 0);
    r.frames.push_back(f);
  }
  return r;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ikk_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("recording CSV parsing") {
  const std::string ok =
      "t,q0,q1,px,py,pz,ow,ox,oy,oz\n"
      "0,0.1,0.2,1,2,3,1,0,0,0\n"
      "0.01,0.1,0.2,1,2,3,1,0,0,0\n"
      "0.02,0.1,0.2,1,2,3,1,0,0,0\n";
  const auto rec = recording_from_csv(ok);
  CHECK(rec.frames.size() == 3);
  CHECK(rec.frames[1].q[1] == 0.2);
  CHECK(rec.rate_hz == doctest::Approx(100.0));

  SUBCASE("duplicate timestamp names the line") {
    const std::string dup =
        "t,q0,q1,px,py,pz,ow,ox,oy,oz\n0,0,0,0,0,0,1,0,0,0\n0,0,0,0,0,0,1,0,0,0\n";
    try {
      recording_from_csv(dup);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("malformed row carries its line number") {
    const std::string bad = "t,q0,q1,px,py,pz,ow,ox,oy,oz\n0,0,0,0,0,0,1,0,0,0\n0.01,x,0,0,0,0,1,0,0,0\n";
    try {
      recording_from_csv(bad);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(recording_from_csv("t,q0,px\n0,0,0\n"), ParseError);
    CHECK_THROWS_AS(recording_from_csv("t,q0,q1,px,py,pz,ow,ox,oy,oz\n0,0,0,0,0,0,1,0,0\n"), ParseError);
    CHECK_THROWS_AS(recording_from_csv("t,q0,q1,px,py,pz,ow,ox,oy,oz\n0,0,0,0,0,0,2,0,0,0\n"), ParseError);
  }
}

TEST_CASE("recording files round-trip bit-exactly") {
  const auto& src = fixture::session42().points[0].recording;
  const auto dir = temp_dir("roundtrip");
  for (const char* name : {"rec.csv", "rec.json"}) {
    save_recording(src, dir / name);
    const auto back = load_recording(dir / name);
    REQUIRE(back.frames.size() == src.frames.size());
    bool same = true;
    for (std::size_t i = 0; i < src.frames.size(); ++i) {
      const auto& a = src.frames[i];
      const auto& b = back.frames[i];
      same = same && a.t == b.t && a.q == b.q && a.hand.position == b.hand.position &&
             a.hand.orientation.coeffs() == b.hand.orientation.coeffs();
    }
    CHECK(same);
  }
  fs::remove_all(dir);
}

TEST_CASE("irregular sampling is rejected") {
  auto rec = constant_velocity(0.0, 20);
  rec.frames[10].t += 0.005;
  CHECK_THROWS_AS(validate_recording(rec), ValidationError);
  rec = constant_velocity(0.0, 20);
  CHECK_NOTHROW(validate_recording(rec));
}

TEST_CASE("hand kinematics estimates") {
  SUBCASE("stationary hand") {
    const auto k = estimate_hand_kinematics(constant_velocity(0.0, 100), 11);
    for (std::size_t i = 0; i < 100; ++i) {
      CHECK(k.linear_speed[i] == 0.0);
      CHECK(k.angular_speed[i] == 0.0);
    }
  }
  SUBCASE("constant 0.10 m/s along x") {
    const auto k = estimate_hand_kinematics(constant_velocity(0.10, 200), 11);
    for (std::size_t i = 6; i < 194; ++i) CHECK(k.linear_speed[i] == doctest::Approx(0.10).epsilon(0.05));
  }
  SUBCASE("pure wrist rotation leaves the position still") {
    Recording r;
    for (int i = 0; i < 100; ++i) {
      Frame f;
      f.t = i * 0.01;
      f.q = JointVector::Zero(7);
      f.hand.position = Vec3(0.4, 0.1, 0.0);
      f.hand.orientation = Quat(Eigen::AngleAxisd(0.5 * f.t, Vec3::UnitY()));
      r.frames.push_back(f);
    }
    const auto k = estimate_hand_kinematics(r, 11);
    for (std::size_t i = 0; i < 100; ++i) {
      CHECK(k.linear_speed[i] <= 1e-3);
      CHECK(k.angular_speed[i] == doctest::Approx(0.5).epsilon(1e-6));
    }
  }
  SUBCASE("window checks") {
    CHECK_THROWS_AS(estimate_hand_kinematics(constant_velocity(0.0, 100), 10), ContractViolation);
    CHECK_THROWS_AS(estimate_hand_kinematics(constant_velocity(0.0, 5), 11), InsufficientData);
  }
}

TEST_CASE("steady segmentation") {
  SUBCASE("all steady") {
    const auto segs = segment_steady(constant_velocity(0.01, 300));
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].begin == 0);
    CHECK(segs[0].end == 300);
  }
  SUBCASE("all fast") { CHECK(segment_steady(constant_velocity(0.2, 300)).empty()); }
  SUBCASE("alternating steady and fast intervals") {
    const auto rec = alternating(4);
    const auto segs = segment_steady(rec);
    REQUIRE(segs.size() == 4);
    const int tol = SteadyConfig{}.window / 2 + 1;
    for (int c = 0; c < 4; ++c) {
      const int begin = c == 0 ? 0 : c * 300 - 1;
      const int end = c * 300 + 200;
      CHECK(std::abs(static_cast<int>(segs[c].begin) - begin) <= tol);
      CHECK(std::abs(static_cast<int>(segs[c].end) - end) <= tol);
      CHECK(segs[c].max_linear_speed <= 0.05);
    }
  }
  SUBCASE("idempotence on its own segments") {
    const auto rec = alternating(3);
    for (const auto& s : segment_steady(rec)) {
      const auto again = segment_steady(slice(rec, s.begin, s.end));
      REQUIRE(again.size() == 1);
      CHECK(again[0].begin == 0);
      CHECK(again[0].end == s.size());
    }
  }
  SUBCASE("raising the threshold never removes steady frames") {
    const auto rec = alternating(3);
    auto steady_set = [&](double v) {
      SteadyConfig cfg;
      cfg.v_lin_max = v;
      cfg.min_len = 1;
      std::vector<bool> in(rec.frames.size(), false);
      for (const auto& s : segment_steady(rec, cfg))
        for (auto i = s.begin; i < s.end; ++i) in[i] = true;
      return in;
    };
    auto prev = steady_set(0.01);
    for (double v : {0.05, 0.1, 0.19, 0.21, 0.5}) {
      const auto cur = steady_set(v);
      for (std::size_t i = 0; i < cur.size(); ++i) CHECK((!prev[i] || cur[i]));
      prev = cur;
    }
  }
}

TEST_CASE("calibration layout") {
  const WorkspaceBox box{Vec3(0, 0, 0), Vec3(1, 2, 3)};
  const auto p = calibration_layout(box, 10);
  REQUIRE(p.size() == 10);
  CHECK(std::abs(oracle::orient(p[0], p[1], p[2], p[3])) > 0.1);
  for (int i = 0; i < 8; ++i) {
    for (int a = 0; a < 3; ++a) CHECK((p[i][a] == box.min[a] || p[i][a] == box.max[a]));
  }
  CHECK(p[8].isApprox(Vec3(0.5, 1, 3)));
  CHECK(p[9].isApprox(Vec3(0.5, 1, 0)));
  CHECK_THROWS_AS(calibration_layout(box, 15), ContractViolation);
}

TEST_CASE("synthetic calibration session") {
  const auto model = ArmModel::default_arm();
  const auto& s = fixture::session42();
  REQUIRE(s.points.size() == 10);
  CHECK(s.provenance == CalibrationSession::Provenance::Synthetic);

  for (const auto& p : s.points) {
    const auto& fr = p.recording.frames;
    REQUIRE(fr.size() == 500);
    double max_speed = 0.0;
    for (std::size_t k = 1; k < fr.size(); ++k) {
      max_speed = std::max(max_speed, (fr[k].hand.position - fr[k - 1].hand.position).norm() * 100.0);
      CHECK(model.within_limits(fr[k].q));
    }
    CHECK(max_speed <= 1e-6);
    CHECK((fr.front().hand.position - *p.target).norm() < 1e-6);
    // Every dwell is steady in full.
    const auto segs = segment_steady(p.recording);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].size() == 500);
  }
}

TEST_CASE("sweep covers most of the feasible self-motion") {
  // Cap lifted so only joint limits and conditioning bound the manifold; the
  // oracle then walks it from the anchor with its own SVD null direction and
  // Newton re-projection.
  const auto model = ArmModel::default_arm();
  SynthesisConfig cfg;
  cfg.n_points = 4;
  cfg.sweep_cap = 3.0;
  const auto s = synthesize_calibration(model, 7, cfg);
  auto null_dir = [&](const JointVector& q, const VecX& prev) {
    Eigen::JacobiSVD<MatX> svd(jacobian(model, q).entries, Eigen::ComputeFullV);
    VecX n = svd.matrixV().col(6);
    if (prev.size() && n.dot(prev) < 0) n = -n;
    return n;
  };
  auto cond = [&](const JointVector& q) {
    Eigen::JacobiSVD<MatX> svd(jacobian(model, q).entries);
    return svd.singularValues()[5] / svd.singularValues()[0];
  };
  const VecX lo = model.lower_limits().array() + 0.05;
  const VecX hi = model.upper_limits().array() - 0.05;
  for (const auto& p : s.points) {
    const auto& fr = p.recording.frames;
    const JointVector q0 = *p.anchor;
    const HandPose hold = forward_kinematics(model, q0);
    double feasible = 0.0;
    for (int sign : {1, -1}) {
      JointVector q = q0;
      VecX prev;
      double arc = 0.0;
      while (arc + 0.002 <= cfg.sweep_cap) {
        prev = null_dir(q, prev);
        JointVector next = q + sign * 0.002 * prev;
        for (int it = 0; it < 5; ++it) {
          next += oracle::svd_damped_pinv(jacobian(model, next).entries, 1e-10) *
                  pose_error(hold, forward_kinematics(model, next), 6);
        }
        if ((next.array() < lo.array()).any() || (next.array() > hi.array()).any()) break;
        if (cond(next) < cfg.min_conditioning) break;
        q = next;
        arc += 0.002;
      }
      feasible += arc;
    }
    double coord = 0.0, cmin = 0.0, cmax = 0.0;
    VecX prev = null_dir(fr[0].q, VecX());
    for (std::size_t k = 1; k < fr.size(); ++k) {
      prev = null_dir(fr[k].q, prev);
      coord += (fr[k].q - fr[k - 1].q).dot(prev);
      cmin = std::min(cmin, coord);
      cmax = std::max(cmax, coord);
    }
    CHECK(feasible > 0.1);
    CHECK((cmax - cmin) >= 0.8 * std::min(feasible, 2.0 * cfg.sweep_cap));
  }
}

TEST_CASE("session manifest round trip") {
  const auto dir = temp_dir("session");
  save_session(fixture::session42(), dir);
  const auto back = load_session(dir / "session.json");
  REQUIRE(back.points.size() == 10);
  CHECK(back.points[3].label == "P04");
  CHECK(back.points[3].recording.frames[17].q == fixture::session42().points[3].recording.frames[17].q);
  CHECK_THROWS_AS(load_session(dir / "missing.json"), ValidationError);
  fs::remove_all(dir);
}
