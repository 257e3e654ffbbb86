#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ikk/simuser.hpp"
#include "ikk/trial.hpp"

namespace ikk {

/// Pseudo-random tracking profile: a flat lead-in, then a C1 monotone cubic
/// through 6-10 knots in [5, 95]. The difficulty style cycles with the seed:
/// (seed - 1) mod 3 = 0 slow, 1 with a fast 90 -> 30 drop, 2 mixed.
ReferenceProfile generate_profile(std::uint64_t seed, double duration_s = 25.0,
                                  double rate_hz = 100.0);

/// Seeds of the three canonical tracking profiles.
inline constexpr std::uint64_t kCanonicalProfileSeeds[3] = {1, 2, 3};

/// Root mean square of the residuals. Throws ContractViolation on a length
/// mismatch or empty input.
double rmse(std::span<const double> actual, std::span<const double> target);

struct RadiusMap {
  double r0 = 0.05;    ///< m at value 0
  double r100 = 0.80;  ///< m at value 100
  double operator()(double value) const { return r0 + (r100 - r0) * value / 100.0; }
};

struct SphereSchedule {
  double initial_radius = 0.50;  ///< m, held during alignment
  double align_s = 5.0;
  double step_s = 5.0;
  std::vector<double> radii;       ///< m, six values
  std::vector<Vec3> centres;       ///< target centres, one per trial
};

void validate(const SphereSchedule& s);

/// Six seeded radii within the radius map and three centres near the volume
/// centre, inside the hull.
SphereSchedule make_sphere_schedule(const InterpolationVolume& volume, std::uint64_t seed,
                                    const RadiusMap& map = {});

struct ExperimentConfig {
  SimUserGains gains;
  ControlConfig control;
  std::vector<std::uint64_t> profile_seeds{1, 2, 3};
  int repetitions = 3;
  double duration_s = 25.0;
  double align_s = 5.0;
  RadiusMap radius_map;
  std::uint64_t seed = 0;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Experiment 1: every profile repeated `repetitions` times. The direct
/// controller reads the reference itself and bypasses the arm and filter.
std::vector<TrialResult> run_experiment1(const ArmModel& model,
                                         std::shared_ptr<const InterpolationVolume> volume,
                                         const ExperimentConfig& cfg,
                                         ControllerKind controller = ControllerKind::IKK);

enum class SphereMode { Single, Parallel };

/// Experiment 2: radius tracked through the IKK signal. In single mode the
/// hand holds its start position; in parallel mode it moves to and holds the
/// target centre.
std::vector<TrialResult> run_experiment2(const ArmModel& model,
                                         std::shared_ptr<const InterpolationVolume> volume,
                                         const ExperimentConfig& cfg, const SphereSchedule& schedule,
                                         SphereMode mode);

// ---------------------------------------------------------------------------
// Learning curve  f(theta, x) = theta4 / (theta3 + exp(x theta1 + theta2)) + x_min

struct LearningCurveFit {
  double theta1 = 0.0, theta2 = 0.0, theta3 = 1.0, theta4 = 0.0;
  double x_min = 0.0;
  double residual = 0.0;
  int restarts = 0;
  /// Best residual after each restart; non-increasing.
  std::vector<double> best_trace;

  double operator()(double x) const;
  /// Limit of the curve for x -> infinity (theta1 < 0) or -infinity.
  double plateau() const;
};

struct FitOptions {
  int restarts = 200;
  std::uint64_t seed = 1;
  /// Floor of the curve; min(y) when not given.
  std::optional<double> x_min;
  int max_iterations = 4000;
};

/// Multi-start Nelder-Mead least squares over trials x = 1..T.
LearningCurveFit fit_learning_curve(std::span<const double> y, const FitOptions& opts = {});

nlohmann::json to_json(const LearningCurveFit& fit);

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { Csv, Json, Markdown };
ReportFormat parse_report_format(const std::string& s);

/// Per-trial table plus mean +/- std per (experiment, controller, trajectory).
/// Failed trials print as FAIL and are left out of the means.
std::string report(std::span<const TrialResult> results, ReportFormat format);

/// Externally supplied completion times (user x trial, seconds; NaN = failed).
struct TimeTable {
  std::string title;
  std::vector<std::string> users;
  std::vector<std::vector<double>> seconds;
};
std::string report(const TimeTable& table, ReportFormat format);
TimeTable time_table_from_json(const nlohmann::json& j);

/// Per-trial CSV (t, reference, actual[, px, py, pz, cx, cy, cz]).
std::string trial_to_csv(const TrialResult& r);

/// Writes results/<exp>/<label>.{csv,json} and results/<exp>/summary.{md,json}.
void write_results(std::span<const TrialResult> results, const std::filesystem::path& dir);

}  // namespace ikk
