#include "ikk/arm_model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>

#include "ikk/errors.hpp"

namespace ikk {

namespace {

void require_dims(const ArmModel& model, const JointVector& q) {
  if (q.size() != model.dof()) {
    std::ostringstream os;
    os << "joint vector has " << q.size() << " entries, model has " << model.dof() << " joints";
    throw ContractViolation(os.str());
  }
}

Vec3 vec3_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw ValidationError(std::string(what) + ": expected an array of 3 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

ArmModel::ArmModel(std::vector<Joint> joints, Vec3 hand_offset, int task_dim)
    : joints_(std::move(joints)), hand_offset_(std::move(hand_offset)), task_dim_(task_dim) {
  if (joints_.empty()) throw ValidationError("arm model needs at least one joint");
  if (task_dim_ != 6 && task_dim_ != 3) throw ValidationError("task dimension must be 3 or 6");
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const auto& jt = joints_[i];
    if (std::abs(jt.axis.norm() - 1.0) > 1e-12) {
      throw ValidationError("joint " + std::to_string(i) + ": axis is not unit length");
    }
    if (!(jt.lower < jt.upper)) {
      throw ValidationError("joint " + std::to_string(i) + ": lower limit must be below upper limit");
    }
  }
}

ArmModel ArmModel::default_arm() {
  constexpr double kShoulderWrist = 2.6;
  std::vector<Joint> joints{
      {Vec3::UnitZ(), Vec3::Zero(), -kShoulderWrist, kShoulderWrist},
      {Vec3::UnitY(), Vec3::Zero(), -kShoulderWrist, kShoulderWrist},
      {Vec3::UnitX(), Vec3(0.30, 0.0, 0.0), -kShoulderWrist, kShoulderWrist},
      {Vec3::UnitZ(), Vec3(0.25, 0.0, 0.0), 0.0, 2.5},
      {Vec3::UnitX(), Vec3::Zero(), -kShoulderWrist, kShoulderWrist},
      {Vec3::UnitY(), Vec3::Zero(), -kShoulderWrist, kShoulderWrist},
      {Vec3::UnitZ(), Vec3::Zero(), -kShoulderWrist, kShoulderWrist},
  };
  return ArmModel(std::move(joints), Vec3(0.08, 0.0, 0.0), 6);
}

std::vector<double> ArmModel::link_lengths() const {
  std::vector<double> out;
  out.reserve(joints_.size() + 1);
  for (const auto& j : joints_) out.push_back(j.offset.norm());
  out.push_back(hand_offset_.norm());
  return out;
}

double ArmModel::reach() const {
  double r = 0.0;
  for (double l : link_lengths()) r += l;
  return r;
}

VecX ArmModel::lower_limits() const {
  VecX v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints_[i].lower;
  return v;
}

VecX ArmModel::upper_limits() const {
  VecX v(dof());
  for (int i = 0; i < dof(); ++i) v[i] = joints_[i].upper;
  return v;
}

bool ArmModel::within_limits(const JointVector& q) const {
  require_dims(*this, q);
  for (int i = 0; i < dof(); ++i) {
    if (q[i] < joints_[i].lower || q[i] > joints_[i].upper) return false;
  }
  return true;
}

JointVector ArmModel::clamp(const JointVector& q) const {
  require_dims(*this, q);
  return q.cwiseMax(lower_limits()).cwiseMin(upper_limits());
}

ArmModel ArmModel::with_task_dim(int r) const { return ArmModel(joints_, hand_offset_, r); }

ChainGeometry chain_geometry(const ArmModel& model, const JointVector& q) {
  require_dims(model, q);
  ChainGeometry g;
  g.origins.reserve(model.dof());
  g.axes.reserve(model.dof());
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Vec3 p = Vec3::Zero();
  for (int i = 0; i < model.dof(); ++i) {
    const Joint& jt = model.joints()[i];
    g.origins.push_back(p);
    g.axes.push_back(R * jt.axis);
    R = R * Eigen::AngleAxisd(q[i], jt.axis).toRotationMatrix();
    p += R * jt.offset;
  }
  g.hand.position = p + R * model.hand_offset();
  g.hand.orientation = Quat(R).normalized();
  return g;
}

HandPose forward_kinematics(const ArmModel& model, const JointVector& q) {
  return chain_geometry(model, q).hand;
}

JacobianMatrix jacobian(const ArmModel& model, const JointVector& q) {
  const ChainGeometry g = chain_geometry(model, q);
  const int r = model.task_dim();
  JacobianMatrix J;
  J.entries.resize(r, model.dof());
  J.config = q;
  for (int i = 0; i < model.dof(); ++i) {
    J.entries.block<3, 1>(0, i) = g.axes[i].cross(g.hand.position - g.origins[i]);
    if (r == 6) J.entries.block<3, 1>(3, i) = g.axes[i];
  }
  return J;
}

RangeNullDims range_null_dims(const MatX& J, double tol) {
  if (!(tol > 0.0)) throw ContractViolation("rank tolerance must be positive");
  const int n = static_cast<int>(J.cols());
  Eigen::JacobiSVD<MatX> svd(J);
  const VecX& s = svd.singularValues();
  const double smax = s.size() > 0 ? s[0] : 0.0;
  int rank = 0;
  if (smax > 0.0) {
    for (int i = 0; i < s.size(); ++i) {
      if (s[i] > tol * smax) ++rank;
    }
  }
  return {rank, n - rank};
}

MatX null_space_basis(const MatX& J, double tol) {
  if (!(tol > 0.0)) throw ContractViolation("rank tolerance must be positive");
  const int n = static_cast<int>(J.cols());
  Eigen::JacobiSVD<MatX> svd(J, Eigen::ComputeFullV);
  const VecX& s = svd.singularValues();
  const double smax = s.size() > 0 ? s[0] : 0.0;
  int rank = 0;
  if (smax > 0.0) {
    for (int i = 0; i < s.size(); ++i) {
      if (s[i] > tol * smax) ++rank;
    }
  }
  MatX N = svd.matrixV().rightCols(n - rank);
  if (N.cols() == 1) {
    Eigen::Index imax = 0;
    N.col(0).cwiseAbs().maxCoeff(&imax);
    if (N(imax, 0) < 0.0) N.col(0) = -N.col(0);
  }
  return N;
}

VecX pose_error(const HandPose& target, const HandPose& current, int task_dim) {
  VecX e(task_dim);
  e.head<3>() = target.position - current.position;
  if (task_dim == 6) {
    Eigen::AngleAxisd aa(target.orientation * current.orientation.conjugate());
    double angle = aa.angle();
    Vec3 axis = aa.axis();
    if (angle > M_PI) {
      angle = 2.0 * M_PI - angle;
      axis = -axis;
    }
    e.tail<3>() = axis * angle;
  }
  return e;
}

ArmModel arm_model_from_json(const nlohmann::json& doc) {
  if (!doc.contains("joints") || !doc["joints"].is_array()) {
    throw ValidationError("arm model: missing \"joints\" array");
  }
  std::vector<Joint> joints;
  for (const auto& j : doc["joints"]) {
    Joint jt;
    jt.axis = vec3_from_json(j.at("axis"), "joint axis");
    jt.offset = vec3_from_json(j.at("offset"), "joint offset");
    const auto& lim = j.at("limits");
    if (!lim.is_array() || lim.size() != 2) throw ValidationError("joint limits: expected [lo, hi]");
    jt.lower = lim[0].get<double>();
    jt.upper = lim[1].get<double>();
    joints.push_back(jt);
  }
  Vec3 hand = doc.contains("hand_offset") ? vec3_from_json(doc["hand_offset"], "hand_offset")
                                          : Vec3::Zero().eval();
  int r = doc.value("task_space", 6);
  return ArmModel(std::move(joints), hand, r);
}

nlohmann::json to_json(const ArmModel& model) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& jt : model.joints()) {
    joints.push_back({{"axis", {jt.axis.x(), jt.axis.y(), jt.axis.z()}},
                      {"offset", {jt.offset.x(), jt.offset.y(), jt.offset.z()}},
                      {"limits", {jt.lower, jt.upper}}});
  }
  const Vec3& h = model.hand_offset();
  return {{"joints", joints}, {"hand_offset", {h.x(), h.y(), h.z()}}, {"task_space", model.task_dim()}};
}

ArmModel load_arm_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open arm model " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("arm model " + path.string() + ": " + e.what());
  }
  return arm_model_from_json(doc);
}

}  // namespace ikk
