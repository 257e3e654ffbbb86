#include <doctest.h>

#include <random>

#include "ikk/arm_model.hpp"
#include "ikk/errors.hpp"
#include "oracles.hpp"

using namespace ikk;

namespace {

JointVector random_q(const ArmModel& m, std::mt19937_64& rng) {
  JointVector q(m.dof());
  for (int i = 0; i < m.dof(); ++i) {
    q[i] = std::uniform_real_distribution<double>(m.lower_limits()[i], m.upper_limits()[i])(rng);
  }
  return q;
}

/// Homogeneous-transform chain written out independently of the library.
Eigen::Matrix4d chain_transform(const ArmModel& m, const JointVector& q) {
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  for (int i = 0; i < m.dof(); ++i) {
    const auto& j = m.joints()[i];
    Eigen::Matrix4d R = Eigen::Matrix4d::Identity();
    R.topLeftCorner<3, 3>() = Eigen::AngleAxisd(q[i], j.axis).toRotationMatrix();
    Eigen::Matrix4d L = Eigen::Matrix4d::Identity();
    L.topRightCorner<3, 1>() = j.offset;
    T = T * R * L;
  }
  Eigen::Matrix4d H = Eigen::Matrix4d::Identity();
  H.topRightCorner<3, 1>() = m.hand_offset();
  return T * H;
}

ArmModel planar_two_link() {
  return ArmModel({{Vec3::UnitZ(), Vec3(0.4, 0, 0), -3.5, 3.5}, {Vec3::UnitZ(), Vec3(0.3, 0, 0), -3.5, 3.5}},
                  Vec3::Zero(), 3);
}

}  // namespace

TEST_CASE("zero configuration stretches the arm along x") {
  const auto m = ArmModel::default_arm();
  const auto p = forward_kinematics(m, JointVector::Zero(7));
  CHECK(p.position.isApprox(Vec3(0.63, 0, 0), 1e-15));
  CHECK(p.orientation.angularDistance(Quat::Identity()) < 1e-15);
  CHECK(m.reach() == doctest::Approx(0.63));
}

TEST_CASE("first joint by pi reflects a planar arm through the shoulder") {
  const auto m = planar_two_link();
  const JointVector q = (JointVector(2) << 0.3, 0.8).finished();
  JointVector r = q;
  r[0] += M_PI;
  const auto a = forward_kinematics(m, q).position;
  const auto b = forward_kinematics(m, r).position;
  CHECK((a.head<2>() + b.head<2>()).norm() < 1e-12);
}

TEST_CASE("forward kinematics matches an independent transform chain") {
  const auto m = ArmModel::default_arm();
  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const auto q = random_q(m, rng);
    const auto T = chain_transform(m, q);
    const auto p = forward_kinematics(m, q);
    CHECK((p.position - T.topRightCorner<3, 1>()).norm() < 1e-10);
    CHECK((p.orientation.toRotationMatrix() - T.topLeftCorner<3, 3>()).norm() < 1e-10);
    CHECK(std::abs(p.orientation.norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("jacobian agrees with finite differences") {
  const auto m = ArmModel::default_arm();
  std::mt19937_64 rng(4);
  for (int k = 0; k < 100; ++k) {
    const auto q = random_q(m, rng);
    const auto J = jacobian(m, q);
    CHECK(J.entries.rows() == 6);
    CHECK(J.entries.cols() == 7);
    CHECK(J.config == q);
    CHECK((J.entries - oracle::fd_jacobian(m, q)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("joint whose origin coincides with the hand has no linear column") {
  const auto m = ArmModel({{Vec3::UnitZ(), Vec3(0.3, 0, 0), -3, 3}, {Vec3::UnitY(), Vec3::Zero(), -3, 3}},
                          Vec3::Zero(), 6);
  const auto J = jacobian(m, JointVector::Constant(2, 0.4)).entries;
  CHECK(J.block<3, 1>(0, 1).norm() < 1e-15);
  CHECK(J.block<3, 1>(3, 1).norm() == doctest::Approx(1.0));
}

TEST_CASE("null space of the default arm") {
  const auto m = ArmModel::default_arm();
  std::mt19937_64 rng(5);
  SUBCASE("generic poses have a one-dimensional orthonormal null space") {
    for (int k = 0; k < 100; ++k) {
      const auto J = jacobian(m, random_q(m, rng));
      const MatX N = null_space_basis(J, 1e-9);
      const auto d = range_null_dims(J, 1e-9);
      CHECK(d.range + d.null == 7);
      if (d.range < 6) continue;
      REQUIRE(N.cols() == 1);
      CHECK(std::abs(N.col(0).norm() - 1.0) < 1e-9);
      CHECK((J.entries * N).norm() <= 1e-9 * std::max(1.0, J.entries.norm()));
      Eigen::Index imax;
      N.col(0).cwiseAbs().maxCoeff(&imax);
      CHECK(N(imax, 0) > 0.0);
    }
  }
  SUBCASE("outstretched arm loses rank but dimensions still add up") {
    const auto J = jacobian(m, JointVector::Zero(7));
    const auto d = range_null_dims(J, 1e-9);
    CHECK(d.range < 6);
    CHECK(d.range + d.null == 7);
    const MatX N = null_space_basis(J, 1e-9);
    CHECK(N.cols() == d.null);
    CHECK((N.transpose() * N - MatX::Identity(N.cols(), N.cols())).norm() < 1e-9);
  }
  SUBCASE("zero matrix") {
    const auto d = range_null_dims(MatX::Zero(6, 7), 1e-9);
    CHECK(d.range == 0);
    CHECK(d.null == 7);
  }
  SUBCASE("a six-joint chain has no redundancy") {
    std::vector<Joint> js(m.joints().begin(), m.joints().begin() + 6);
    const ArmModel six(js, m.hand_offset(), 6);
    const JointVector q = (JointVector(6) << 0.3, -0.2, 0.5, 1.0, 0.4, -0.3).finished();
    CHECK(null_space_basis(jacobian(six, q), 1e-9).cols() == 0);
  }
}

TEST_CASE("position-only task space") {
  const auto m = ArmModel::default_arm().with_task_dim(3);
  const JointVector q = (JointVector(7) << 0.2, 0.3, -0.4, 1.2, 0.1, 0.2, 0.3).finished();
  const auto J = jacobian(m, q);
  CHECK(J.entries.rows() == 3);
  CHECK(null_space_basis(J, 1e-9).cols() == 4);
}

TEST_CASE("model validation and dimension checks") {
  CHECK_THROWS_AS(ArmModel({}, Vec3::Zero(), 6), ValidationError);
  CHECK_THROWS_AS(ArmModel({{Vec3(1, 1, 0), Vec3::Zero(), -1, 1}}, Vec3::Zero(), 6), ValidationError);
  CHECK_THROWS_AS(ArmModel({{Vec3::UnitX(), Vec3::Zero(), 1, -1}}, Vec3::Zero(), 6), ValidationError);
  const auto m = ArmModel::default_arm();
  CHECK_THROWS_AS(forward_kinematics(m, JointVector::Zero(6)), ContractViolation);
  CHECK_THROWS_AS(jacobian(m, JointVector::Zero(8)), ContractViolation);
}

TEST_CASE("arm model JSON round trip") {
  const auto m = ArmModel::default_arm();
  const auto back = arm_model_from_json(to_json(m));
  const JointVector q = (JointVector(7) << 0.2, 0.3, -0.4, 1.2, 0.1, 0.2, 0.3).finished();
  CHECK(forward_kinematics(back, q).position == forward_kinematics(m, q).position);
  CHECK(back.task_dim() == 6);
  CHECK_THROWS_AS(arm_model_from_json(nlohmann::json::object()), ValidationError);
}

TEST_CASE("forward kinematics is deterministic") {
  const auto m = ArmModel::default_arm();
  const JointVector q = (JointVector(7) << 0.2, 0.3, -0.4, 1.2, 0.1, 0.2, 0.3).finished();
  const auto a = jacobian(m, q).entries;
  const auto b = jacobian(m, q).entries;
  CHECK(a == b);
}
