#include "ikk/simuser.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <Eigen/Cholesky>

#include "ikk/errors.hpp"
#include "ikk/logging.hpp"

namespace ikk {

void validate(const SimUserGains& g) {
  if (!(g.k_task >= 0.0) || !(g.k_null >= 0.0)) throw ValidationError("gains must be non-negative");
  if (!(g.damping > 0.0)) throw ValidationError("damping must be positive");
  if (!(g.speed_limit > 0.0)) throw ValidationError("joint speed limit must be positive");
  if (!(g.reaction_delay >= 0.0) || !(g.preview >= 0.0)) {
    throw ValidationError("delay and preview must be non-negative");
  }
  if (!(g.noise >= 0.0)) throw ValidationError("noise level must be non-negative");
}

MatX damped_pinv(const MatX& J, double lambda) {
  if (!(lambda > 0.0)) throw ContractViolation("damping must be positive");
  MatX A = J * J.transpose();
  A.diagonal().array() += lambda * lambda;
  // A is symmetric positive definite; solve A X = J, then J+ = X^T.
  return Eigen::LLT<MatX>(A).solve(J).transpose();
}

JointVector solve_ik(const ArmModel& model, const HandPose& target, const JointVector& seed,
                     const JointVector& nominal, const IkOptions& opts) {
  if (seed.size() != model.dof() || nominal.size() != model.dof()) {
    throw ContractViolation("IK seed/nominal size does not match the arm");
  }
  const int n = model.dof();
  JointVector q = model.clamp(seed);
  double err_norm = 0.0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const VecX err = pose_error(target, forward_kinematics(model, q), model.task_dim());
    err_norm = err.norm();
    if (err_norm < opts.tolerance) return q;
    const MatX J = jacobian(model, q).entries;
    const bool far = err_norm > 1e-3;
    const MatX P = damped_pinv(J, far ? opts.damping : 1e-8);
    VecX dq = P * ((far ? opts.step_gain : 1.0) * err);
    if (far) {
      const MatX N = MatX::Identity(n, n) - P * J;
      dq += N * (opts.nominal_gain * (nominal - q));
    }
    q = model.clamp(q + dq);
  }
  if (err_norm < 1e-9) return q;
  throw UnreachableTarget("inverse kinematics did not converge (residual " +
                          std::to_string(err_norm) + ")");
}

VecX signal_gradient_direction(const InterpolatedBasis& basis, const JointVector& q) {
  if (basis.directions.cols() == 0) throw ContractViolation("basis has no directions");
  VecX g = basis.directions.col(0);
  if (basis.mode == SignalMode::TwoPC && basis.directions.cols() >= 2) {
    const VecX radial = basis.directions * (basis.directions.transpose() * (q - basis.mean));
    if (radial.norm() > 1e-9) g = radial;
  }
  const double norm = g.norm();
  if (!(norm > 0.0)) throw DegenerateField("signal direction vanished");
  return g / norm;
}

JointVector integrate_step(const ArmModel& model, const JointVector& q, const HandPose& pose_target,
                           const VecX& z, const Vec3& hand_velocity, const SimUserGains& gains,
                           double dt, StepEvents* events) {
  if (!(dt > 0.0)) throw ContractViolation("time step must be positive");
  const int n = model.dof();
  const int r = model.task_dim();
  if (q.size() != n || z.size() != n) throw ContractViolation("joint vector size mismatch");
  StepEvents ev;

  const MatX J = jacobian(model, q).entries;
  const MatX P = damped_pinv(J, gains.damping);
  VecX task = gains.k_task * pose_error(pose_target, forward_kinematics(model, q), r);
  task.head<3>() += hand_velocity;
  VecX v_task = P * task;
  const MatX B = null_space_basis(J, 1e-9);
  VecX v_null = B * (B.transpose() * z);

  const double peak = (v_task + v_null).cwiseAbs().maxCoeff();
  if (peak > gains.speed_limit) {
    const double s = gains.speed_limit / peak;
    v_task *= s;
    v_null *= s;
    ev.speed_clipped = true;
  }

  JointVector next = q + dt * v_task;
  // Shorten the null-space part so it never pushes a joint past its limits.
  double alpha = 1.0;
  const VecX lo = model.lower_limits();
  const VecX hi = model.upper_limits();
  for (int i = 0; i < n; ++i) {
    const double d = dt * v_null[i];
    if (d > 0.0 && next[i] + d > hi[i]) alpha = std::min(alpha, std::max(0.0, (hi[i] - next[i]) / d));
    if (d < 0.0 && next[i] + d < lo[i]) alpha = std::min(alpha, std::max(0.0, (lo[i] - next[i]) / d));
  }
  next += alpha * dt * v_null;
  if (!model.within_limits(next)) {
    next = model.clamp(next);
    ev.joint_limit = true;
    log().debug("joint limit reached; configuration projected back");
  }
  if (alpha < 1.0) ev.joint_limit = true;
  if (events) *events = ev;
  return next;
}

double null_rate_command(double signal_error, double span, const SimUserGains& gains,
                         std::mt19937_64* noise_rng) {
  double c = gains.k_null * signal_error * span / 100.0;
  if (noise_rng && gains.noise > 0.0) {
    std::normal_distribution<double> xi(0.0, 1.0);
    c *= 1.0 + gains.noise * xi(*noise_rng);
  }
  return std::clamp(c, -gains.speed_limit, gains.speed_limit);
}

JointVector track_step(const ArmModel& model, const JointVector& q, const TrackTarget& target,
                       const InterpolationVolume& volume, const SimUserGains& gains, double dt,
                       std::optional<double> perceived_value, std::mt19937_64* noise_rng,
                       double* null_rate_out) {
  const HandPose hand = forward_kinematics(model, q);
  const InterpolatedBasis basis = interpolate_basis(volume, hand.position);
  const double value = perceived_value ? *perceived_value : control_signal(basis, 0.0, q).value;
  const double c = null_rate_command(target.signal_ref - value, basis.span(), gains, noise_rng);
  if (null_rate_out) *null_rate_out = c;
  const VecX z = c * signal_gradient_direction(basis, q);
  return integrate_step(model, q, target.pose, z, Vec3::Zero(), gains, dt);
}

Vec3 volume_centre(const InterpolationVolume& volume) {
  if (volume.nodes.empty()) throw ContractViolation("volume has no nodes");
  Vec3 c = Vec3::Zero();
  for (const auto& n : volume.nodes) c += n.node_position;
  return c / static_cast<double>(volume.nodes.size());
}

JointVector start_configuration(const ArmModel& model, const InterpolationVolume& volume,
                                const Vec3& position) {
  if (volume.dof() != model.dof()) throw ContractViolation("volume and arm disagree on joint count");
  const JointVector seed = model.clamp(interpolate_basis(volume, position).mean);
  const HandPose target{position, forward_kinematics(model, seed).orientation};
  return solve_ik(model, target, seed, seed);
}

// ---------------------------------------------------------------------------

ArmSim::ArmSim(const ArmModel& model, std::shared_ptr<const InterpolationVolume> volume,
               SimUserGains gains, ControlConfig control, JointVector q0)
    : model_(model), volume_(std::move(volume)), gains_(gains), stream_(control), q_(std::move(q0)) {
  if (!volume_) throw ContractViolation("simulation needs a volume");
  if (q_.size() != model_.dof() || volume_->dof() != model_.dof()) {
    throw ContractViolation("arm, volume and start configuration disagree on joint count");
  }
  validate(gains_);
  hand_ = forward_kinematics(model_, q_);
  pose_target_ = hand_;
  refresh();
}

void ArmSim::refresh() {
  hand_ = forward_kinematics(model_, q_);
  basis_ = interpolate_basis(*volume_, hand_.position);
  sample_ = stream_.push(control_signal(basis_, t_, q_, stream_.config()));
}

void ArmSim::step(double null_rate, const Vec3& hand_velocity, double dt) {
  pose_target_.position += dt * hand_velocity;
  VecX z = VecX::Zero(model_.dof());
  if (null_rate != 0.0) {
    z = null_rate * signal_gradient_direction(basis_, q_);
    if (stream_.config().invert) z = -z;
  }
  q_ = integrate_step(model_, q_, pose_target_, z, hand_velocity, gains_, dt, &events_);
  t_ += dt;
  refresh();
}

// ---------------------------------------------------------------------------

TrackingRun run_tracking(const ArmModel& model, std::shared_ptr<const InterpolationVolume> volume,
                         const SimUserGains& gains, const ReferenceProfile& profile,
                         const TrackingOptions& opts) {
  if (profile.values.empty()) throw ContractViolation("reference profile is empty");
  if (!(opts.dt > 0.0) || !(opts.align_s >= 0.0)) throw ContractViolation("bad tracking timing");
  validate(gains);
  const Vec3 hold = opts.hold_position ? *opts.hold_position : volume_centre(*volume);

  TrackingRun run;
  run.q0 = start_configuration(model, *volume, hold);
  ArmSim sim(model, volume, gains, opts.control, run.q0);
  const HandPose start = sim.hand();
  if (opts.target_position) sim.set_pose_target({*opts.target_position, start.orientation});

  const double align_value = opts.align_value ? *opts.align_value : profile.values.front();
  auto reference = [&](double t) {
    return t <= opts.align_s + 1e-12 ? align_value : profile.value_at(t - opts.align_s);
  };
  auto score = [&](double v) {
    return opts.radius_map ? opts.radius_map->first + opts.radius_map->second * v : v;
  };

  const auto n_align = static_cast<long>(std::llround(opts.align_s / opts.dt));
  const auto n_total = n_align + static_cast<long>(std::llround(profile.duration() / opts.dt));
  const auto delay_steps = static_cast<long>(std::llround(gains.reaction_delay / opts.dt));

  std::mt19937_64 rng(opts.seed);
  std::deque<double> seen;
  seen.push_back(sim.sample().value);

  TrialResult& res = run.result;
  res.seed = opts.seed;
  res.label = profile.label;
  double over_since = -1.0;
  std::vector<double> pos_err;

  for (long k = 0; k < n_total; ++k) {
    const double t = k * opts.dt;
    const double perceived = seen.size() > static_cast<std::size_t>(delay_steps)
                                 ? seen[seen.size() - 1 - delay_steps]
                                 : seen.front();
    const double c = null_rate_command(reference(t + gains.preview) - perceived,
                                       sim.basis().span(), gains, &rng);
    run.null_rate.push_back(c);
    sim.step(c, Vec3::Zero(), opts.dt);
    seen.push_back(sim.sample().value);
    if (seen.size() > static_cast<std::size_t>(delay_steps) + 2) seen.pop_front();

    const double t1 = (k + 1) * opts.dt;
    const double ref = reference(t1);
    const auto& s = sim.sample();
    if (!std::isfinite(s.unclamped) || !sim.q().allFinite()) {
      res.success = false;
      res.note = "diverged: non-finite state";
      break;
    }
    if (std::abs(ref - s.unclamped) > 100.0) {
      if (over_since < 0.0) over_since = t1;
      if (t1 - over_since > 1.0) {
        res.success = false;
        res.note = "diverged: signal error above 100 for more than 1 s";
        break;
      }
    } else {
      over_since = -1.0;
    }
    if (k + 1 > n_align) {
      res.t.push_back(t1 - opts.align_s);
      res.reference.push_back(score(ref));
      res.actual.push_back(score(s.value));
      const Vec3 goal = sim.pose_target().position;
      run.max_hand_drift = std::max(run.max_hand_drift, (sim.hand().position - goal).norm());
      if (opts.target_position) {
        res.position.push_back(sim.hand().position);
        res.target_position.push_back(goal);
        pos_err.push_back((sim.hand().position - goal).norm());
      }
    }
  }

  if (res.success && !res.t.empty()) {
    double ss = 0.0;
    for (std::size_t i = 0; i < res.t.size(); ++i) {
      const double d = res.actual[i] - res.reference[i];
      ss += d * d;
    }
    const double e = std::sqrt(ss / static_cast<double>(res.t.size()));
    if (opts.radius_map) {
      res.rmse["radius_cm"] = 100.0 * e;
    } else {
      res.rmse["signal"] = e;
    }
    if (!pos_err.empty()) {
      double sp = 0.0;
      for (double d : pos_err) sp += d * d;
      res.rmse["position_cm"] = 100.0 * std::sqrt(sp / static_cast<double>(pos_err.size()));
    }
  }
  return run;
}

}  // namespace ikk
