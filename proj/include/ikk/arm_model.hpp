#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "ikk/types.hpp"

namespace ikk {

/// One revolute joint of a serial chain. The joint rotates about `axis`
/// (expressed in the frame of the previous link); `offset` is the translation
/// from this joint to the next one, expressed in the rotated frame.
struct Joint {
  Vec3 axis = Vec3::UnitZ();
  Vec3 offset = Vec3::Zero();
  double lower = -M_PI;
  double upper = M_PI;
};

/// Serial shoulder-elbow-wrist chain. Immutable once constructed; the
/// constructor validates every invariant.
class ArmModel {
 public:
  ArmModel(std::vector<Joint> joints, Vec3 hand_offset, int task_dim = 6);

  /// 7 revolute joints: spherical shoulder (z, y, x), elbow (z), spherical
  /// wrist (x, y, z). Upper arm 0.30 m, forearm 0.25 m, hand 0.08 m.
  static ArmModel default_arm();

  int dof() const { return static_cast<int>(joints_.size()); }
  /// Task-space dimension r: 6 (position + orientation) or 3 (position only).
  int task_dim() const { return task_dim_; }
  const std::vector<Joint>& joints() const { return joints_; }
  const Vec3& hand_offset() const { return hand_offset_; }

  /// Link lengths in chain order, hand offset last.
  std::vector<double> link_lengths() const;
  double reach() const;

  VecX lower_limits() const;
  VecX upper_limits() const;
  bool within_limits(const JointVector& q) const;
  JointVector clamp(const JointVector& q) const;

  ArmModel with_task_dim(int r) const;

 private:
  std::vector<Joint> joints_;
  Vec3 hand_offset_;
  int task_dim_;
};

struct HandPose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
};

/// r x n Jacobian together with the configuration it was evaluated at.
/// Rows 0-2 are linear velocity, rows 3-5 (when r = 6) angular velocity.
struct JacobianMatrix {
  MatX entries;
  JointVector config;
};

struct RangeNullDims {
  int range = 0;
  int null = 0;
};

HandPose forward_kinematics(const ArmModel& model, const JointVector& q);

/// World-frame origins and axes of every joint at q, plus the hand position.
struct ChainGeometry {
  std::vector<Vec3> origins;
  std::vector<Vec3> axes;
  HandPose hand;
};
ChainGeometry chain_geometry(const ArmModel& model, const JointVector& q);

JacobianMatrix jacobian(const ArmModel& model, const JointVector& q);

/// Orthonormal basis (n x dim) of N(J). Singular values <= tol * sigma_max
/// count as zero. A one-dimensional basis is returned with its
/// largest-magnitude entry positive.
MatX null_space_basis(const MatX& J, double tol);
inline MatX null_space_basis(const JacobianMatrix& J, double tol) {
  return null_space_basis(J.entries, tol);
}

RangeNullDims range_null_dims(const MatX& J, double tol);
inline RangeNullDims range_null_dims(const JacobianMatrix& J, double tol) {
  return range_null_dims(J.entries, tol);
}

/// Task-space error (target - current): position difference, followed by the
/// rotation vector of target * current^-1 when r = 6.
VecX pose_error(const HandPose& target, const HandPose& current, int task_dim);

ArmModel arm_model_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ArmModel& model);
ArmModel load_arm_model(const std::filesystem::path& path);

}  // namespace ikk
