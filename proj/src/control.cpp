#include "ikk/control.hpp"

#include <algorithm>
#include <cmath>

#include "ikk/errors.hpp"

namespace ikk {

void validate(const ControlConfig& cfg) {
  if (!(cfg.time_constant >= 0.0)) throw ValidationError("time constant must be non-negative");
  if (!(cfg.max_slew > 0.0)) throw ValidationError("slew limit must be positive");
}

ControlSample control_signal(const InterpolatedBasis& basis, double t, const JointVector& q,
                             const ControlConfig& cfg) {
  if (q.size() != basis.mean.size()) throw ContractViolation("joint vector size mismatch");
  ControlSample s;
  s.t = t;
  s.mode = basis.mode;
  s.inside_hull = basis.inside_hull;
  const VecX p = basis.directions.transpose() * (q - basis.mean);
  s.raw = basis.mode == SignalMode::OnePC ? p[0] : p.norm();
  const double span = basis.span();
  if (!(span > 0.0)) throw DegenerateRange("interpolated projection range is empty");
  double u = 100.0 * (s.raw - basis.range_min) / span;
  if (cfg.invert) u = 100.0 - u;
  s.unclamped = u;
  s.value = std::clamp(u, 0.0, 100.0);
  return s;
}

ControlSample control_signal(const InterpolationVolume& volume, const Frame& frame,
                             const ControlConfig& cfg) {
  return control_signal(interpolate_basis(volume, frame.hand.position), frame.t, frame.q, cfg);
}

ControlStream::ControlStream(ControlConfig cfg) : cfg_(cfg) { validate(cfg_); }

void ControlStream::reset() {
  last_t_.reset();
  last_value_.reset();
  held_.reset();
}

ControlSample ControlStream::push(ControlSample s) {
  if (!std::isfinite(s.t)) throw StreamError("sample time is not finite");
  if (last_t_ && !(s.t > *last_t_)) {
    throw StreamError("sample times must increase (got " + std::to_string(s.t) + " after " +
                      std::to_string(*last_t_) + ")");
  }
  double target = s.value;
  if (cfg_.clamp == ClampPolicy::Hold) {
    if (s.unclamped >= 0.0 && s.unclamped <= 100.0) {
      held_ = s.unclamped;
    } else if (held_) {
      target = *held_;
    }
  }
  if (!last_t_) {
    last_t_ = s.t;
    last_value_ = target;
    s.value = target;
    return s;
  }
  const double dt = s.t - *last_t_;
  const double alpha = cfg_.time_constant > 0.0 ? 1.0 - std::exp(-dt / cfg_.time_constant) : 1.0;
  double v = *last_value_ + alpha * (target - *last_value_);
  const double step = cfg_.max_slew * dt;
  v = std::clamp(v, *last_value_ - step, *last_value_ + step);
  v = std::clamp(v, 0.0, 100.0);
  last_t_ = s.t;
  last_value_ = v;
  s.value = v;
  return s;
}

ControlSample ControlStream::push(const InterpolationVolume& volume, const Frame& frame) {
  return push(control_signal(volume, frame, cfg_));
}

std::vector<ControlSample> stream(const InterpolationVolume& volume, const ControlConfig& cfg,
                                  std::span<const Frame> frames) {
  ControlStream s(cfg);
  std::vector<ControlSample> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(s.push(volume, f));
  return out;
}

}  // namespace ikk
