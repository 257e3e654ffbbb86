#include "ikk/trial.hpp"

#include <algorithm>
#include <cmath>

#include "ikk/errors.hpp"

namespace ikk {

double ReferenceProfile::value_at(double t) const {
  if (values.empty()) throw ContractViolation("reference profile is empty");
  const double x = t * rate_hz;
  if (x <= 0.0) return values.front();
  const auto i = static_cast<std::size_t>(std::floor(x));
  if (i + 1 >= values.size()) return values.back();
  const double f = x - static_cast<double>(i);
  return values[i] + f * (values[i + 1] - values[i]);
}

namespace {

nlohmann::json points_json(const std::vector<Vec3>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : v) out.push_back({p.x(), p.y(), p.z()});
  return out;
}

std::vector<Vec3> points_from_json(const nlohmann::json& j) {
  std::vector<Vec3> out;
  for (const auto& p : j) {
    const auto v = p.get<std::vector<double>>();
    if (v.size() != 3) throw ValidationError("position entries need 3 coordinates");
    out.emplace_back(v[0], v[1], v[2]);
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const TrialResult& r) {
  nlohmann::json j{
      {"experiment", r.experiment},
      {"label", r.label},
      {"subject", r.subject},
      {"controller", to_string(r.controller)},
      {"trajectory", r.trajectory},
      {"repetition", r.repetition},
      {"seed", r.seed},
      {"t", r.t},
      {"reference", r.reference},
      {"actual", r.actual},
      {"rmse", r.rmse},
      {"success", r.success},
      {"note", r.note},
  };
  if (!r.position.empty()) {
    j["position"] = points_json(r.position);
    j["target_position"] = points_json(r.target_position);
  }
  return j;
}

TrialResult trial_result_from_json(const nlohmann::json& j) {
  try {
    TrialResult r;
    r.experiment = j.at("experiment").get<std::string>();
    r.label = j.at("label").get<std::string>();
    r.subject = j.value("subject", std::string("sim"));
    const auto c = j.at("controller").get<std::string>();
    if (c != "IKK" && c != "direct") throw ValidationError("unknown controller kind '" + c + "'");
    r.controller = c == "IKK" ? ControllerKind::IKK : ControllerKind::Direct;
    r.trajectory = j.value("trajectory", 0);
    r.repetition = j.value("repetition", 0);
    r.seed = j.value("seed", std::uint64_t{0});
    r.t = j.at("t").get<std::vector<double>>();
    r.reference = j.at("reference").get<std::vector<double>>();
    r.actual = j.at("actual").get<std::vector<double>>();
    if (r.t.size() != r.reference.size() || r.t.size() != r.actual.size()) {
      throw ValidationError("trial traces differ in length");
    }
    if (j.contains("position")) {
      r.position = points_from_json(j["position"]);
      r.target_position = points_from_json(j.at("target_position"));
    }
    r.rmse = j.value("rmse", std::map<std::string, double>{});
    r.success = j.value("success", true);
    r.note = j.value("note", std::string{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed trial result: ") + e.what());
  }
}

}  // namespace ikk
