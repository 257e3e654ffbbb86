#pragma once

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ikk/capture.hpp"
#include "ikk/interp.hpp"

namespace ikk {

enum class ClampPolicy {
  Saturate,  ///< clamp to [0, 100]
  Hold,      ///< keep the last in-range value while outside the calibrated range
};

struct ControlConfig {
  double time_constant = 0.05;  ///< s, first-order low-pass; 0 disables
  double max_slew = 400.0;      ///< units/s on the 0-100 scale
  ClampPolicy clamp = ClampPolicy::Saturate;
  /// Reverse the mapping (0 = fully closed instead of fully open).
  bool invert = false;
};

void validate(const ControlConfig& cfg);

struct ControlSample {
  double t = 0.0;
  double raw = 0.0;        ///< projection (OnePC) or radial norm (TwoPC)
  double value = 0.0;      ///< 0-100
  double unclamped = 0.0;  ///< 0-100 scale before clamping
  bool inside_hull = false;
  SignalMode mode = SignalMode::OnePC;
};

/// Per-frame control value (no filtering).
ControlSample control_signal(const InterpolationVolume& volume, const Frame& frame,
                             const ControlConfig& cfg = {});
ControlSample control_signal(const InterpolatedBasis& basis, double t, const JointVector& q,
                             const ControlConfig& cfg = {});

/// Stateful low-pass + slew-rate limiter over per-frame control values.
/// One owner per stream.
class ControlStream {
 public:
  explicit ControlStream(ControlConfig cfg = {});

  /// Filter a pre-computed sample; throws StreamError on non-increasing time.
  ControlSample push(ControlSample sample);
  ControlSample push(const InterpolationVolume& volume, const Frame& frame);

  void reset();
  std::optional<double> last_value() const { return last_value_; }
  const ControlConfig& config() const { return cfg_; }

 private:
  ControlConfig cfg_;
  std::optional<double> last_t_;
  std::optional<double> last_value_;
  std::optional<double> held_;
};

std::vector<ControlSample> stream(const InterpolationVolume& volume, const ControlConfig& cfg,
                                  std::span<const Frame> frames);

}  // namespace ikk
