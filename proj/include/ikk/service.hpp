#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ikk/experiments.hpp"
#include "ikk/simuser.hpp"

namespace ikk {

inline constexpr int kProtocolVersion = 1;

enum class SessionMode { Free, Exp1, Exp2Single, Exp2Parallel };
const char* to_string(SessionMode m);
SessionMode parse_session_mode(const std::string& s);

struct SessionConfig {
  SimUserGains gains;
  ControlConfig control;
  double tick_hz = 100.0;
  /// A state message every `state_every` ticks (50 Hz at the defaults).
  int state_every = 2;
  double stall_s = 2.0;
  /// rad/s at |u| = 1.
  double jog_max = 2.0;
  double align_s = 5.0;
  double duration_s = 25.0;
  RadiusMap radius_map;
  /// Finished trials are written here when set.
  std::optional<std::filesystem::path> results_dir;
};

/// One client session: message handling and the fixed-rate task loop. Not
/// thread-safe; the owning loop serializes all calls.
class Session {
 public:
  Session(const ArmModel& model, std::shared_ptr<const InterpolationVolume> volume,
          SessionConfig cfg = {});

  /// Apply a client message received at wall-clock time `now` (s). Returns
  /// the direct replies. Throws ProtocolError on malformed input. Input
  /// messages with an "at" field (task-clock seconds, non-decreasing) are
  /// queued and take effect on the tick that reaches that time; "start" may
  /// carry an initial batch of them in "inputs".
  std::vector<nlohmann::json> handle(const nlohmann::json& msg, double now);
  std::vector<nlohmann::json> handle(const std::string& text, double now);

  /// One internal tick at wall-clock time `now`. Returns state/result messages.
  std::vector<nlohmann::json> tick(double now);

  SessionMode mode() const { return mode_; }
  bool trial_running() const { return running_; }
  bool paused() const { return paused_; }
  double task_time() const { return task_t_; }
  const ArmSim& sim() const { return *sim_; }
  double value() const;
  const std::optional<TrialResult>& last_result() const { return last_result_; }

 private:
  nlohmann::json envelope(const std::string& type);
  nlohmann::json state_message();
  void start(const nlohmann::json& msg);
  void reset_arm();
  std::optional<nlohmann::json> finish_trial();
  void schedule_input(const nlohmann::json& msg);
  void apply_input(const std::string& type, const nlohmann::json& msg, bool check_only = false);

  ArmModel model_;
  std::shared_ptr<const InterpolationVolume> volume_;
  SessionConfig cfg_;
  std::unique_ptr<ArmSim> sim_;
  JointVector q_start_;
  SessionMode mode_ = SessionMode::Free;

  std::int64_t seq_out_ = 0;
  std::optional<std::int64_t> seq_in_;
  std::optional<double> last_input_;
  bool paused_ = false;
  std::int64_t ticks_ = 0;

  double jog_ = 0.0;
  Vec3 hand_velocity_ = Vec3::Zero();
  std::optional<double> direct_value_;
  bool clamped_flag_ = false;

  bool running_ = false;
  double task_t_ = 0.0;
  ReferenceProfile profile_;
  SphereSchedule schedule_;
  std::uint64_t trial_seed_ = 0;
  int trial_index_ = 0;
  TrialResult trace_;
  std::optional<TrialResult> last_result_;
  /// Inputs stamped with a task-clock time ("at"), applied on that tick.
  std::deque<std::pair<double, nlohmann::json>> scheduled_;
};

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  ///< 0 picks a free port
  SessionConfig session;
};

/// WebSocket host: one Session per connection, each driven by a 100 Hz timer
/// on a single I/O thread.
class Server {
 public:
  Server(const ArmModel& model, std::shared_ptr<const InterpolationVolume> volume,
         ServerConfig cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Bind and listen; returns the bound port.
  unsigned short listen();
  /// Serve until stop(); blocking.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ikk
