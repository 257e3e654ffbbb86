#include <doctest.h>

#include <random>

#include "ikk/errors.hpp"
#include "ikk/experiments.hpp"
#include "ikk/simuser.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ikk;

namespace {

ReferenceProfile flat(double value, double seconds) {
  ReferenceProfile p;
  p.values.assign(static_cast<std::size_t>(seconds * 100), value);
  p.lead_in_s = 0.0;
  p.label = "flat";
  return p;
}

}  // namespace

TEST_CASE("damped pseudo-inverse") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const MatX J = MatX::NullaryExpr(6, 7, [&] { return g(rng); });
    for (double lambda : {1e-6, 0.01, 0.5}) {
      CHECK((damped_pinv(J, lambda) - oracle::svd_damped_pinv(J, lambda)).norm() < 1e-9);
    }
  }
  SUBCASE("orthonormal rows give the transpose") {
    const MatX Q = Eigen::HouseholderQR<MatX>(MatX::NullaryExpr(7, 7, [&] { return g(rng); })).householderQ();
    const MatX J = Q.topRows(6);
    CHECK((damped_pinv(J, 1e-8) - J.transpose()).norm() < 1e-10);
    CHECK((damped_pinv(J, 0.1) - J.transpose() / 1.01).norm() < 1e-10);
  }
  SUBCASE("zero matrix with damping") { CHECK(damped_pinv(MatX::Zero(6, 7), 0.1).isZero()); }
  CHECK_THROWS_AS(damped_pinv(MatX::Zero(6, 7), 0.0), ContractViolation);
}

TEST_CASE("inverse kinematics") {
  const auto model = ArmModel::default_arm();
  const JointVector q_nom = nominal_configuration(model);
  const auto home = forward_kinematics(model, q_nom);
  HandPose target = home;
  target.position += Vec3(0.03, -0.05, 0.04);
  const auto q = solve_ik(model, target, q_nom, q_nom);
  const auto got = forward_kinematics(model, q);
  CHECK((got.position - target.position).norm() < 1e-9);
  CHECK(got.orientation.angularDistance(target.orientation) < 1e-9);
  target.position = Vec3(2.0, 0, 0);
  CHECK_THROWS_AS(solve_ik(model, target, q_nom, q_nom), UnreachableTarget);
}

TEST_CASE("resolved-rate step") {
  const auto model = ArmModel::default_arm();
  const JointVector q = nominal_configuration(model);
  const auto pose = forward_kinematics(model, q);
  const SimUserGains gains;

  SUBCASE("at equilibrium with no command nothing moves") {
    const auto next = integrate_step(model, q, pose, VecX::Zero(7), Vec3::Zero(), gains, 0.01);
    CHECK((next - q).norm() < 1e-12);
  }
  SUBCASE("a null-space command leaves the hand in place") {
    const VecX z = null_space_basis(jacobian(model, q), 1e-9).col(0) * 0.2;
    const auto next = integrate_step(model, q, pose, z, Vec3::Zero(), gains, 0.01);
    CHECK((next - q).norm() > 1e-3);
    CHECK((forward_kinematics(model, next).position - pose.position).norm() <= 1e-6);
  }
  SUBCASE("pose error shrinks") {
    HandPose target = pose;
    target.position += Vec3(0.02, 0.01, -0.01);
    JointVector x = q;
    double prev = (forward_kinematics(model, x).position - target.position).norm();
    for (int k = 0; k < 50; ++k) {
      x = integrate_step(model, x, target, VecX::Zero(7), Vec3::Zero(), gains, 0.01);
      const double e = (forward_kinematics(model, x).position - target.position).norm();
      CHECK(e < prev);
      prev = e;
    }
  }
  SUBCASE("speed limit") {
    StepEvents ev;
    const auto next = integrate_step(model, q, pose, VecX::Constant(7, 50.0), Vec3::Zero(), gains, 0.01, &ev);
    CHECK((next - q).cwiseAbs().maxCoeff() <= gains.speed_limit * 0.01 + 1e-12);
    CHECK(ev.speed_clipped);
  }
}

TEST_CASE("simulated user holds a constant reference") {
  const auto model = ArmModel::default_arm();
  TrackingOptions opts;
  opts.align_s = 4.0;
  opts.seed = 3;
  const auto run = run_tracking(model, fixture::volume42(), SimUserGains{}, flat(60.0, 6.0), opts);
  CHECK(run.result.rmse.at("signal") <= 0.5);
  CHECK(run.max_hand_drift <= 2e-3);
  CHECK(run.result.actual.size() == run.result.reference.size());

  SUBCASE("seeded runs are reproducible") {
    const auto again = run_tracking(model, fixture::volume42(), SimUserGains{}, flat(60.0, 6.0), opts);
    CHECK(again.result.actual == run.result.actual);
    CHECK(again.null_rate == run.null_rate);
  }
}

TEST_CASE("shorter reaction delay tracks no worse") {
  const auto model = ArmModel::default_arm();
  const auto profile = generate_profile(2, 20.0);
  double prev = 1e9;
  for (double delay : {0.30, 0.15, 0.075}) {
    SimUserGains g;
    g.reaction_delay = delay;
    g.noise = 0.0;
    TrackingOptions opts;
    opts.seed = 5;
    const double e = run_tracking(model, fixture::volume42(), g, profile, opts).result.rmse.at("signal");
    CHECK(e <= prev * 1.02);
    prev = e;
  }
}

TEST_CASE("arm simulation") {
  const auto model = ArmModel::default_arm();
  const auto vol = fixture::volume42();
  const auto q0 = start_configuration(model, *vol, volume_centre(*vol));
  CHECK((forward_kinematics(model, q0).position - volume_centre(*vol)).norm() < 1e-6);
  ArmSim sim(model, vol, SimUserGains{}, ControlConfig{}, q0);
  const double v0 = sim.sample().value;
  for (int k = 0; k < 100; ++k) sim.step(0.3, Vec3::Zero(), 0.01);
  CHECK(sim.t() == doctest::Approx(1.0));
  CHECK(sim.sample().value > v0);
  CHECK((sim.hand().position - volume_centre(*vol)).norm() < 2e-3);
  for (int k = 0; k < 100; ++k) sim.step(0.0, Vec3(0.02, 0, 0), 0.01);
  CHECK(sim.hand().position.x() - volume_centre(*vol).x() == doctest::Approx(0.02).epsilon(0.1));

  SimUserGains bad;
  bad.k_task = -1.0;
  CHECK_THROWS_AS(validate(bad), ValidationError);
}
