#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "ikk/arm_model.hpp"
#include "ikk/control.hpp"
#include "ikk/interp.hpp"
#include "ikk/trial.hpp"

namespace ikk {

/// Simulated-user parameters. Gains are tuning values for a desk-scale
/// stand-in of a human subject.
struct SimUserGains {
  double k_task = 5.0;          ///< 1/s, hand pose regulation
  double k_null = 5.0;          ///< 1/s, signal regulation through the null space
  double damping = 0.05;        ///< damped least squares lambda
  double speed_limit = 2.0;     ///< rad/s, infinity norm of the joint velocity
  double reaction_delay = 0.15; ///< s
  double noise = 0.02;          ///< proportional noise on the null-space command
  double preview = 0.15;        ///< s, look-ahead on the displayed reference
};

void validate(const SimUserGains& g);

/// J^T (J J^T + lambda^2 I)^-1.
MatX damped_pinv(const MatX& J, double lambda);

struct IkOptions {
  int max_iterations = 4000;
  double tolerance = 1e-12;
  double damping = 0.02;
  double step_gain = 0.5;
  double nominal_gain = 0.1;
};

/// Damped-least-squares inverse kinematics from `seed`, with a secondary
/// null-space pull toward `nominal`. Throws UnreachableTarget.
JointVector solve_ik(const ArmModel& model, const HandPose& target, const JointVector& seed,
                     const JointVector& nominal, const IkOptions& opts = {});

/// Unit joint-space direction along which the signal coordinate grows:
/// the first direction (OnePC) or the radial gradient (TwoPC).
VecX signal_gradient_direction(const InterpolatedBasis& basis, const JointVector& q);

struct StepEvents {
  bool joint_limit = false;
  bool speed_clipped = false;
};

/// One explicit-Euler step of resolved-rate motion:
///   qdot = J+ (k_task * pose_error + v_hand) + (I - J+ J) * z,
/// with J+ the damped pseudo-inverse, z the null-space command, qdot clipped
/// to the speed limit and the null-space part shortened so no joint leaves
/// its limits.
JointVector integrate_step(const ArmModel& model, const JointVector& q, const HandPose& pose_target,
                           const VecX& z, const Vec3& hand_velocity, const SimUserGains& gains,
                           double dt, StepEvents* events = nullptr);

struct TrackTarget {
  HandPose pose;
  double signal_ref = 0.0;
};

/// Simulated-user step toward `target`. The signal error uses
/// `perceived_value` when given (delayed feedback), else the current value.
/// The null-space rate actually commanded is written to `null_rate_out`.
JointVector track_step(const ArmModel& model, const JointVector& q, const TrackTarget& target,
                       const InterpolationVolume& volume, const SimUserGains& gains, double dt,
                       std::optional<double> perceived_value = std::nullopt,
                       std::mt19937_64* noise_rng = nullptr, double* null_rate_out = nullptr);

/// Null-space rate (rad/s) a user with these gains commands for a signal
/// error on the 0-100 scale, given the local coordinate span.
double null_rate_command(double signal_error, double span, const SimUserGains& gains,
                         std::mt19937_64* noise_rng = nullptr);

/// Configuration reaching `position` with the orientation suggested by the
/// calibration data there.
JointVector start_configuration(const ArmModel& model, const InterpolationVolume& volume,
                                const Vec3& position);

/// Mean of the node positions; a point inside the calibrated region.
Vec3 volume_centre(const InterpolationVolume& volume);

/// Arm + control pipeline simulation advanced at a fixed step. Shared by the
/// offline simulated user and the live session host.
class ArmSim {
 public:
  ArmSim(const ArmModel& model, std::shared_ptr<const InterpolationVolume> volume,
         SimUserGains gains, ControlConfig control, JointVector q0);

  /// Advance by dt with a null-space rate (rad/s along the signal gradient)
  /// and a commanded hand velocity (m/s, moves the pose target).
  void step(double null_rate, const Vec3& hand_velocity, double dt);

  void set_pose_target(const HandPose& pose) { pose_target_ = pose; }
  const HandPose& pose_target() const { return pose_target_; }
  const JointVector& q() const { return q_; }
  const HandPose& hand() const { return hand_; }
  const ControlSample& sample() const { return sample_; }
  const InterpolatedBasis& basis() const { return basis_; }
  double t() const { return t_; }
  const StepEvents& last_events() const { return events_; }
  const ArmModel& model() const { return model_; }
  const InterpolationVolume& volume() const { return *volume_; }

 private:
  void refresh();

  ArmModel model_;
  std::shared_ptr<const InterpolationVolume> volume_;
  SimUserGains gains_;
  ControlStream stream_;
  JointVector q_;
  HandPose hand_;
  HandPose pose_target_;
  InterpolatedBasis basis_;
  ControlSample sample_;
  StepEvents events_;
  double t_ = 0.0;
};

struct TrackingOptions {
  double align_s = 5.0;
  double dt = 0.01;
  /// Hand position held during the trial (defaults to the volume centre).
  std::optional<Vec3> hold_position;
  /// Exp. 2 parallel mode: sphere centre the hand must reach and hold.
  std::optional<Vec3> target_position;
  ControlConfig control;
  std::uint64_t seed = 0;
  /// Reference held during alignment; the profile's first value when empty.
  std::optional<double> align_value;
  /// Score the reference/actual traces as radii r = first + second * value
  /// (Exp. 2); identity scoring on the 0-100 scale when empty.
  std::optional<std::pair<double, double>> radius_map;
};

struct TrackingRun {
  TrialResult result;
  JointVector q0;
  /// Commanded null-space rate at every step (alignment included), rad/s.
  std::vector<double> null_rate;
  /// Largest hand displacement from the start position while holding, m.
  double max_hand_drift = 0.0;
};

/// Closed-loop simulated trial: alignment phase at the profile's first value,
/// then the profile itself, logged at 1/dt.
TrackingRun run_tracking(const ArmModel& model, std::shared_ptr<const InterpolationVolume> volume,
                         const SimUserGains& gains, const ReferenceProfile& profile,
                         const TrackingOptions& opts = {});

}  // namespace ikk
