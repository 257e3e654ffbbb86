#include <doctest.h>

#include <cmath>

#include "ikk/control.hpp"
#include "ikk/errors.hpp"
#include "fixtures.hpp"

using namespace ikk;

namespace {

InterpolatedBasis line_basis() {
  InterpolatedBasis b;
  b.mode = SignalMode::OnePC;
  b.mean = VecX::Zero(3);
  b.directions = (MatX(3, 1) << 1, 0, 0).finished();
  b.range_min = -0.5;
  b.range_max = 0.5;
  b.inside_hull = true;
  return b;
}

ControlSample sample(double t, double unclamped) {
  ControlSample s;
  s.t = t;
  s.unclamped = unclamped;
  s.value = std::clamp(unclamped, 0.0, 100.0);
  return s;
}

ControlConfig passthrough() {
  ControlConfig c;
  c.time_constant = 0.0;
  c.max_slew = 1e12;
  return c;
}

}  // namespace

TEST_CASE("mapping onto the 0-100 scale") {
  const auto b = line_basis();
  auto at = [&](double a, double off = 0.0, ControlConfig cfg = {}) {
    return control_signal(b, 0.0, (VecX(3) << a, off, -off).finished(), cfg);
  };
  CHECK(at(0.0).value == doctest::Approx(50.0));
  CHECK(at(0.5).value == doctest::Approx(100.0));
  CHECK(at(-0.5).value == doctest::Approx(0.0));
  CHECK(at(0.1, 3.0).value == doctest::Approx(at(0.1).value));
  CHECK(at(1.0).value == 100.0);
  CHECK(at(1.0).unclamped == doctest::Approx(150.0));
  ControlConfig inv;
  inv.invert = true;
  CHECK(at(0.25, 0.0, inv).value == doctest::Approx(25.0));

  SUBCASE("two components use the radial coordinate") {
    auto two = b;
    two.mode = SignalMode::TwoPC;
    two.directions = MatX::Identity(3, 2);
    two.range_min = 0.0;
    two.range_max = 1.0;
    const auto s = control_signal(two, 0.0, (VecX(3) << 0.3, 0.4, 9.0).finished());
    CHECK(s.raw == doctest::Approx(0.5));
    CHECK(s.value == doctest::Approx(50.0));
  }
  CHECK_THROWS_AS(control_signal(b, 0.0, VecX::Zero(4)), ContractViolation);
}

TEST_CASE("low-pass response to a step") {
  ControlConfig cfg;
  cfg.time_constant = 0.05;
  cfg.max_slew = 1e9;
  ControlStream s(cfg);
  s.push(sample(0.0, 0.0));
  double v = 0.0;
  for (int k = 1; k <= 50; ++k) {
    v = s.push(sample(k * 0.001, 100.0)).value;
    if (k == 50) CHECK(v == doctest::Approx(100.0 * (1.0 - std::exp(-1.0))).epsilon(1e-9));
  }
  for (int k = 51; k <= 300; ++k) v = s.push(sample(k * 0.001, 100.0)).value;
  CHECK(v > 99.7);
}

TEST_CASE("slew limit stretches a full-scale step") {
  ControlConfig cfg;
  cfg.time_constant = 0.0;
  cfg.max_slew = 200.0;
  ControlStream s(cfg);
  s.push(sample(0.0, 0.0));
  double reached = -1.0;
  double prev = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double v = s.push(sample(k * 0.01, 100.0)).value;
    CHECK(v - prev <= 2.0 + 1e-9);
    prev = v;
    if (reached < 0 && v >= 100.0 - 1e-9) reached = k * 0.01;
  }
  CHECK(reached >= 0.5 - 1e-9);
}

TEST_CASE("filter disabled reproduces the raw values") {
  ControlStream s(passthrough());
  for (int k = 0; k < 100; ++k) {
    const double u = 50.0 + 40.0 * std::sin(0.3 * k);
    CHECK(s.push(sample(k * 0.01, u)).value == doctest::Approx(u));
  }
}

TEST_CASE("stream time must increase") {
  ControlStream s;
  s.push(sample(1.0, 10.0));
  CHECK_THROWS_AS(s.push(sample(1.0, 10.0)), StreamError);
  CHECK_THROWS_AS(s.push(sample(0.5, 10.0)), StreamError);
  CHECK_THROWS_AS(s.push(sample(NAN, 10.0)), StreamError);
  s.reset();
  CHECK_NOTHROW(s.push(sample(0.5, 10.0)));
}

TEST_CASE("hold policy keeps the last in-range value") {
  auto cfg = passthrough();
  cfg.clamp = ClampPolicy::Hold;
  ControlStream hold(cfg);
  ControlStream sat(passthrough());
  for (double t : {0.0, 0.01}) {
    hold.push(sample(t, 70.0));
    sat.push(sample(t, 70.0));
  }
  CHECK(hold.push(sample(0.02, 130.0)).value == doctest::Approx(70.0));
  CHECK(sat.push(sample(0.02, 130.0)).value == doctest::Approx(100.0));
  CHECK(hold.push(sample(0.03, 40.0)).value == doctest::Approx(40.0));
}

TEST_CASE("configuration checks") {
  ControlConfig c;
  c.time_constant = -1.0;
  CHECK_THROWS_AS(ControlStream{c}, ValidationError);
  c = {};
  c.max_slew = 0.0;
  CHECK_THROWS_AS(ControlStream{c}, ValidationError);
}

TEST_CASE("calibrated volume maps its own sweeps across the scale") {
  const auto& s = fixture::session42();
  const auto vol = fixture::volume42();
  for (const auto& p : s.points) {
    double lo = 100.0, hi = 0.0;
    for (const auto& f : p.recording.frames) {
      const auto c = control_signal(*vol, f);
      CHECK(c.inside_hull);
      lo = std::min(lo, c.value);
      hi = std::max(hi, c.value);
    }
    CHECK(lo < 10.0);
    CHECK(hi > 90.0);
  }
  const auto out = stream(*vol, {}, s.points[0].recording.frames);
  CHECK(out.size() == s.points[0].recording.frames.size());
}
