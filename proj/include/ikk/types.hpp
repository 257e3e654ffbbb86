#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace ikk {

using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;

/// Joint angles of the task chain, radians.
using JointVector = Eigen::VectorXd;

enum class SignalMode { OnePC, TwoPC };

inline const char* to_string(SignalMode m) {
  return m == SignalMode::OnePC ? "OnePC" : "TwoPC";
}

}  // namespace ikk
