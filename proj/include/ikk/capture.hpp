#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ikk/arm_model.hpp"

namespace ikk {

struct Frame {
  double t = 0.0;
  JointVector q;
  HandPose hand;
};

/// Time-ordered frames sampled at a nominal rate.
struct Recording {
  std::vector<Frame> frames;
  double rate_hz = 100.0;
  std::string label;
};

/// Throws ValidationError unless timestamps are finite, non-negative and
/// strictly increasing with every step within 20% of 1/rate_hz.
void validate_recording(const Recording& rec);

/// Frame index range [begin, end) where the hand is steady.
struct SteadySegment {
  std::size_t begin = 0;
  std::size_t end = 0;
  Vec3 mean_position = Vec3::Zero();
  double max_linear_speed = 0.0;
  double max_angular_speed = 0.0;
  std::size_t size() const { return end - begin; }
};

struct HandKinematics {
  std::vector<double> linear_speed;   ///< m/s
  std::vector<double> angular_speed;  ///< rad/s
};

struct SteadyConfig {
  double v_lin_max = 0.05;  ///< m/s
  double v_ang_max = 0.10;  ///< rad/s
  int window = 11;          ///< frames, odd
  std::size_t min_len = 50; ///< frames
};

/// Central differences of hand position/orientation (one-sided at the ends),
/// smoothed by a centred moving average of `window` frames.
HandKinematics estimate_hand_kinematics(const Recording& rec, int window);

/// Maximal runs of frames below both speed thresholds, at least min_len long.
std::vector<SteadySegment> segment_steady(const Recording& rec, const SteadyConfig& cfg = {});

/// Copy of frames [begin, end) as a standalone recording.
Recording slice(const Recording& rec, std::size_t begin, std::size_t end);

Recording load_recording(const std::filesystem::path& path);
void save_recording(const Recording& rec, const std::filesystem::path& path);
/// CSV text with header `t,q0..q{n-1},px,py,pz,ow,ox,oy,oz`.
std::string recording_to_csv(const Recording& rec);
Recording recording_from_csv(const std::string& text, const std::string& label = {});

// ---------------------------------------------------------------------------
// Calibration sessions

struct CalibrationPoint {
  std::string label;
  Recording recording;
  /// Target hand position (synthetic sessions only).
  std::optional<Vec3> target;
  /// Joint configuration at the centre of the null-space sweep (synthetic only).
  std::optional<JointVector> anchor;
};

struct CalibrationSession {
  enum class Provenance { Recorded, Synthetic };
  std::vector<CalibrationPoint> points;
  ArmModel model = ArmModel::default_arm();
  Provenance provenance = Provenance::Recorded;
  std::uint64_t seed = 0;
};

/// Axis-aligned calibration box in hand space.
struct WorkspaceBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  Vec3 center() const { return 0.5 * (min + max); }
};

/// Calibration targets: box vertices (ordered so that any four leading
/// entries are not coplanar), then the centres of the upper and lower faces,
/// then the +x, -x, +y, -y face centres. At most 14 points.
std::vector<Vec3> calibration_layout(const WorkspaceBox& box, std::size_t n_points = 10);

struct SynthesisConfig {
  std::size_t n_points = 10;
  double dwell_s = 5.0;
  double rate_hz = 100.0;
  /// Default box sits in front of the default arm's shoulder.
  WorkspaceBox box{Vec3(0.28, -0.01, -0.155), Vec3(0.42, 0.23, 0.025)};
  /// Arc length (rad, joint space) explored each way along the self-motion.
  double sweep_cap = 0.5;
  /// Fraction of the feasible self-motion range covered by the sweep.
  double sweep_fraction = 0.9;
  /// Self-motion stops once sigma_min / sigma_max of J drops below this.
  double min_conditioning = 0.02;
};

/// Reference joint configuration used to seed inverse kinematics and to fix
/// the hand orientation of synthetic calibration targets.
JointVector nominal_configuration(const ArmModel& model);

/// Feasible interval of the self-motion coordinate (joint-space arc length)
/// through q0, limited by joint limits, conditioning and the sweep cap.
struct SelfMotionRange {
  double lower = 0.0;
  double upper = 0.0;
};
SelfMotionRange self_motion_range(const ArmModel& model, const JointVector& q0,
                                  const SynthesisConfig& cfg = {});

/// Move along the one-dimensional self-motion manifold by arc length `ds`,
/// starting from q with the orientation hint `dir` (updated in place).
JointVector walk_self_motion(const ArmModel& model, const JointVector& q, const HandPose& hold,
                             double ds, VecX& dir, double max_step = 5e-3);

/// Simulated calibration session: for each target the hand is brought there
/// by inverse kinematics, then the arm sweeps its self-motion sinusoidally
/// for dwell_s seconds while the hand pose stays fixed.
CalibrationSession synthesize_calibration(const ArmModel& model, std::uint64_t seed,
                                          const SynthesisConfig& cfg = {});

/// Manifest JSON: {"points":[{"label":..., "path":...}], "arm": optional path}.
CalibrationSession load_session(const std::filesystem::path& manifest,
                                const std::optional<ArmModel>& model = std::nullopt);
void save_session(const CalibrationSession& session, const std::filesystem::path& dir);

}  // namespace ikk
