#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ikk/types.hpp"

namespace ikk {

/// Sampled reference trace on the 0-100 scale.
struct ReferenceProfile {
  std::vector<double> values;
  double rate_hz = 100.0;
  double lead_in_s = 2.0;
  std::uint64_t seed = 0;
  std::string label;

  double duration() const { return values.empty() ? 0.0 : values.size() / rate_hz; }
  /// Linear interpolation, clamped to the first/last sample.
  double value_at(double t) const;
};

enum class ControllerKind { IKK, Direct };

inline const char* to_string(ControllerKind k) { return k == ControllerKind::IKK ? "IKK" : "direct"; }

/// Reference and achieved traces of one trial (scored part only) with its
/// RMSE figures. Exp. 1 traces are signal values (0-100); Exp. 2 traces are
/// radii in metres.
struct TrialResult {
  std::string experiment;  ///< exp1, exp2-single, exp2-parallel
  std::string label;
  std::string subject = "sim";
  ControllerKind controller = ControllerKind::IKK;
  int trajectory = 0;
  int repetition = 0;
  std::uint64_t seed = 0;

  std::vector<double> t;
  std::vector<double> reference;
  std::vector<double> actual;
  /// Hand position and target centre (Exp. 2), empty otherwise.
  std::vector<Vec3> position;
  std::vector<Vec3> target_position;

  /// Keys: "signal", "radius_cm", "position_cm".
  std::map<std::string, double> rmse;
  bool success = true;
  std::string note;
};

nlohmann::json to_json(const TrialResult& r);
TrialResult trial_result_from_json(const nlohmann::json& j);

}  // namespace ikk
