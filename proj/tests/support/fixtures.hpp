#pragma once

#include <memory>

#include "ikk/capture.hpp"
#include "ikk/identify.hpp"
#include "ikk/interp.hpp"

namespace ikk::fixture {

inline const CalibrationSession& session42() {
  static const CalibrationSession s = synthesize_calibration(ArmModel::default_arm(), 42);
  return s;
}

inline const std::vector<SignalBasis>& bases42() {
  static const std::vector<SignalBasis> b = identify_session(session42());
  return b;
}

inline std::shared_ptr<const InterpolationVolume> volume42() {
  static const auto v = std::make_shared<const InterpolationVolume>(build_volume(bases42()));
  return v;
}

}  // namespace ikk::fixture
