#include "ikk/service.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "ikk/errors.hpp"
#include "ikk/logging.hpp"

namespace ikk {

const char* to_string(SessionMode m) {
  switch (m) {
    case SessionMode::Free: return "free";
    case SessionMode::Exp1: return "exp1";
    case SessionMode::Exp2Single: return "exp2-single";
    case SessionMode::Exp2Parallel: return "exp2-parallel";
  }
  return "free";
}

SessionMode parse_session_mode(const std::string& s) {
  if (s == "free") return SessionMode::Free;
  if (s == "exp1") return SessionMode::Exp1;
  if (s == "exp2-single") return SessionMode::Exp2Single;
  if (s == "exp2-parallel") return SessionMode::Exp2Parallel;
  throw ProtocolError("unknown mode '" + s + "'");
}

namespace {

double number_field(const nlohmann::json& msg, const char* key) {
  if (!msg.contains(key) || !msg[key].is_number()) {
    throw ProtocolError(std::string("field '") + key + "' must be a number");
  }
  const double v = msg[key].get<double>();
  if (!std::isfinite(v)) throw ProtocolError(std::string("field '") + key + "' is not finite");
  return v;
}

nlohmann::json vec_json(const VecX& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

Session::Session(const ArmModel& model, std::shared_ptr<const InterpolationVolume> volume,
                 SessionConfig cfg)
    : model_(model), volume_(std::move(volume)), cfg_(std::move(cfg)) {
  if (!volume_) throw ContractViolation("session needs a volume");
  if (!(cfg_.tick_hz > 0.0) || cfg_.state_every < 1 || !(cfg_.jog_max > 0.0)) {
    throw ValidationError("session timing must be positive");
  }
  q_start_ = start_configuration(model_, *volume_, volume_centre(*volume_));
  reset_arm();
}

void Session::reset_arm() {
  sim_ = std::make_unique<ArmSim>(model_, volume_, cfg_.gains, cfg_.control, q_start_);
  jog_ = 0.0;
  hand_velocity_.setZero();
  direct_value_.reset();
}

double Session::value() const { return direct_value_ ? *direct_value_ : sim_->sample().value; }

nlohmann::json Session::envelope(const std::string& type) {
  return {{"v", kProtocolVersion}, {"seq", ++seq_out_}, {"type", type}};
}

std::vector<nlohmann::json> Session::handle(const std::string& text, double now) {
  nlohmann::json msg;
  try {
    msg = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("malformed JSON: ") + e.what());
  }
  return handle(msg, now);
}

std::vector<nlohmann::json> Session::handle(const nlohmann::json& msg, double now) {
  if (!msg.is_object()) throw ProtocolError("message must be a JSON object");
  if (!msg.contains("v") || msg["v"] != kProtocolVersion) throw ProtocolError("unsupported protocol version");
  if (!msg.contains("seq") || !msg["seq"].is_number_integer()) throw ProtocolError("missing sequence number");
  const auto seq = msg["seq"].get<std::int64_t>();
  if (seq_in_ && seq <= *seq_in_) throw ProtocolError("sequence number did not increase");
  if (!msg.contains("type") || !msg["type"].is_string()) throw ProtocolError("missing message type");
  seq_in_ = seq;
  last_input_ = now;
  paused_ = false;

  const auto type = msg["type"].get<std::string>();
  std::vector<nlohmann::json> out;
  if (type == "hello") {
    auto r = envelope("hello");
    r["dof"] = model_.dof();
    r["task_dim"] = model_.task_dim();
    r["nodes"] = volume_->nodes.size();
    r["signal_mode"] = to_string(volume_->mode);
    r["modes"] = {"free", "exp1", "exp2-single", "exp2-parallel"};
    r["tick_hz"] = cfg_.tick_hz;
    r["state_hz"] = cfg_.tick_hz / cfg_.state_every;
    r["jog_max"] = cfg_.jog_max;
    out.push_back(std::move(r));
  } else if (type == "start") {
    start(msg);
    auto r = envelope("started");
    r["mode"] = to_string(mode_);
    r["align_s"] = cfg_.align_s;
    r["duration_s"] = running_ ? profile_.duration() : 0.0;
    out.push_back(std::move(r));
  } else if (type == "jog" || type == "ik_move" || type == "direct") {
    if (msg.contains("at")) {
      schedule_input(msg);
    } else {
      apply_input(type, msg);
    }
  } else if (type == "stop") {
    running_ = false;
    scheduled_.clear();
  } else {
    throw ProtocolError("unknown message type '" + type + "'");
  }
  return out;
}

void Session::schedule_input(const nlohmann::json& msg) {
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    throw ProtocolError("scheduled input needs a type");
  }
  const auto type = msg["type"].get<std::string>();
  if (type != "jog" && type != "ik_move" && type != "direct") {
    throw ProtocolError("'" + type + "' cannot be scheduled");
  }
  const double at = number_field(msg, "at");
  if (!running_) throw ProtocolError("scheduled input needs a running trial");
  if (!scheduled_.empty() && at < scheduled_.back().first) {
    throw ProtocolError("scheduled inputs must be in time order");
  }
  apply_input(type, msg, true);
  scheduled_.emplace_back(at, msg);
}

void Session::apply_input(const std::string& type, const nlohmann::json& msg, bool check_only) {
  if (type == "jog") {
    const double u = number_field(msg, "u");
    if (check_only) return;
    clamped_flag_ |= std::abs(u) > 1.0;
    jog_ = std::clamp(u, -1.0, 1.0);
  } else if (type == "ik_move") {
    if (!msg.contains("dx") || !msg["dx"].is_array() || msg["dx"].size() != 3) {
      throw ProtocolError("field 'dx' must be an array of 3 numbers");
    }
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
      if (!msg["dx"][i].is_number()) throw ProtocolError("field 'dx' must be an array of 3 numbers");
      v[i] = msg["dx"][i].get<double>();
    }
    if (!v.allFinite()) throw ProtocolError("field 'dx' is not finite");
    if (!check_only) hand_velocity_ = v;
  } else {
    const double v = number_field(msg, "value");
    if (check_only) return;
    clamped_flag_ |= v < 0.0 || v > 100.0;
    direct_value_ = std::clamp(v, 0.0, 100.0);
    if (running_) trace_.controller = ControllerKind::Direct;
  }
}

void Session::start(const nlohmann::json& msg) {
  if (!msg.contains("mode") || !msg["mode"].is_string()) throw ProtocolError("start needs a mode");
  mode_ = parse_session_mode(msg["mode"].get<std::string>());
  reset_arm();
  running_ = false;
  scheduled_.clear();
  task_t_ = 0.0;
  ticks_ = 0;
  trial_seed_ = msg.value("seed", std::uint64_t{1});
  trial_index_ = msg.value("trial", 1);
  trace_ = TrialResult{};
  trace_.subject = msg.value("subject", std::string("live"));
  trace_.seed = trial_seed_;
  trace_.experiment = to_string(mode_);
  trace_.controller = ControllerKind::IKK;
  if (mode_ == SessionMode::Free) return;
  if (mode_ == SessionMode::Exp1) {
    profile_ = generate_profile(trial_seed_, cfg_.duration_s);
    trace_.trajectory = static_cast<int>(trial_seed_);
    trace_.repetition = trial_index_;
    trace_.label = "traj" + std::to_string(trial_seed_) + "-live" + std::to_string(trial_index_);
  } else {
    schedule_ = make_sphere_schedule(*volume_, trial_seed_, cfg_.radius_map);
    if (trial_index_ < 1 || trial_index_ > static_cast<int>(schedule_.centres.size())) {
      throw ProtocolError("trial index out of range");
    }
    const auto& map = cfg_.radius_map;
    profile_ = ReferenceProfile{};
    profile_.lead_in_s = 0.0;
    const auto per_step = static_cast<std::size_t>(std::llround(schedule_.step_s * profile_.rate_hz));
    for (double r : schedule_.radii) {
      const double v = std::clamp(100.0 * (r - map.r0) / (map.r100 - map.r0), 0.0, 100.0);
      profile_.values.insert(profile_.values.end(), per_step, v);
    }
    trace_.trajectory = trial_index_;
    trace_.repetition = 1;
    trace_.label = "trial" + std::to_string(trial_index_) + "-live";
  }
  running_ = true;
  if (msg.contains("inputs")) {
    if (!msg["inputs"].is_array()) throw ProtocolError("field 'inputs' must be an array");
    for (const auto& m : msg["inputs"]) schedule_input(m);
  }
}

std::vector<nlohmann::json> Session::tick(double now) {
  std::vector<nlohmann::json> out;
  if (last_input_ && now - *last_input_ > cfg_.stall_s) {
    if (!paused_) log().info("client stalled; task clock paused");
    paused_ = true;
  }
  const double dt = 1.0 / cfg_.tick_hz;
  if (!paused_) {
    if (running_) {
      const double next = task_t_ + dt;
      while (!scheduled_.empty() && scheduled_.front().first <= next + 1e-9) {
        const auto& m = scheduled_.front().second;
        apply_input(m["type"].get<std::string>(), m);
        scheduled_.pop_front();
      }
    }
    sim_->step(jog_ * cfg_.jog_max, hand_velocity_, dt);
    if (running_) {
      task_t_ += dt;
      const double score_t = task_t_ - cfg_.align_s;
      if (score_t > 1e-9) {
        const double ref = profile_.value_at(score_t);
        trace_.t.push_back(score_t);
        trace_.reference.push_back(ref);
        trace_.actual.push_back(value());
        if (mode_ == SessionMode::Exp2Parallel || mode_ == SessionMode::Exp2Single) {
          trace_.position.push_back(sim_->hand().position);
          trace_.target_position.push_back(schedule_.centres[trial_index_ - 1]);
        }
      }
      if (score_t >= profile_.duration() - 1e-9) {
        if (auto r = finish_trial()) out.push_back(std::move(*r));
      }
    }
  }
  if (++ticks_ % cfg_.state_every == 0) out.push_back(state_message());
  return out;
}

std::optional<nlohmann::json> Session::finish_trial() {
  running_ = false;
  scheduled_.clear();
  TrialResult r = std::move(trace_);
  trace_ = TrialResult{};
  if (r.t.empty()) return std::nullopt;
  if (mode_ == SessionMode::Exp1) {
    r.rmse["signal"] = rmse(r.actual, r.reference);
  } else {
    const auto& map = cfg_.radius_map;
    const double k = (map.r100 - map.r0) / 100.0;
    for (auto& v : r.reference) v = map.r0 + k * v;
    for (auto& v : r.actual) v = map.r0 + k * v;
    r.rmse["radius_cm"] = 100.0 * rmse(r.actual, r.reference);
    if (mode_ == SessionMode::Exp2Parallel) {
      double s = 0.0;
      for (std::size_t i = 0; i < r.position.size(); ++i) {
        s += (r.position[i] - r.target_position[i]).squaredNorm();
      }
      r.rmse["position_cm"] = 100.0 * std::sqrt(s / static_cast<double>(r.position.size()));
    }
  }
  if (cfg_.results_dir) {
    try {
      const std::vector<TrialResult> one{r};
      const auto sub = *cfg_.results_dir / r.experiment;
      std::filesystem::create_directories(sub);
      std::ofstream(sub / (r.label + ".csv")) << trial_to_csv(r);
      std::ofstream(sub / (r.label + ".json")) << to_json(r).dump() << '\n';
    } catch (const std::exception& e) {
      log().error("could not write trial {}: {}", r.label, e.what());
    }
  }
  auto msg = envelope("result");
  msg.update(to_json(r));
  msg["type"] = "result";
  last_result_ = std::move(r);
  return msg;
}

nlohmann::json Session::state_message() {
  auto m = envelope("state");
  const auto& hand = sim_->hand();
  m["t"] = sim_->t();
  m["q"] = vec_json(sim_->q());
  m["hand"] = {hand.position.x(), hand.position.y(), hand.position.z()};
  m["orientation"] = {hand.orientation.w(), hand.orientation.x(), hand.orientation.y(),
                      hand.orientation.z()};
  m["value"] = value();
  m["inside_hull"] = sim_->sample().inside_hull;
  m["mode"] = to_string(mode_);
  m["paused"] = paused_;
  m["clamped"] = clamped_flag_;
  clamped_flag_ = false;
  nlohmann::json task{{"running", running_}, {"t", task_t_}};
  if (running_) {
    const double score_t = task_t_ - cfg_.align_s;
    task["phase"] = score_t > 0.0 ? "track" : "align";
    task["progress"] = std::clamp(score_t / profile_.duration(), 0.0, 1.0);
    const double ref = score_t > 0.0 ? profile_.value_at(score_t) : profile_.values.front();
    if (mode_ == SessionMode::Exp1) {
      task["reference"] = ref;
    } else {
      const auto& map = cfg_.radius_map;
      const double k = (map.r100 - map.r0) / 100.0;
      const auto& c = schedule_.centres[trial_index_ - 1];
      task["radius"] = map.r0 + k * value();
      task["target_radius"] = score_t > 0.0 ? map.r0 + k * ref : schedule_.initial_radius;
      task["target_centre"] = {c.x(), c.y(), c.z()};
    }
  }
  m["task"] = std::move(task);
  return m;
}

// ---------------------------------------------------------------------------

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, const ArmModel& model,
             std::shared_ptr<const InterpolationVolume> volume, const SessionConfig& cfg)
      : ws_(std::move(socket)),
        timer_(ws_.get_executor()),
        session_(model, std::move(volume), cfg),
        period_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / cfg.tick_hz))) {}

  void run() {
    ws_.text(true);
    ws_.async_accept(beast::bind_front_handler(&Connection::on_accept, shared_from_this()));
  }

 private:
  double now() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  void on_accept(beast::error_code ec) {
    if (ec) {
      log().warn("websocket handshake failed: {}", ec.message());
      return;
    }
    start_ = std::chrono::steady_clock::now();
    next_ = start_ + period_;
    read();
    schedule_tick();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      timer_.cancel();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
      for (auto& m : session_.handle(text, now())) send(m.dump());
    } catch (const ProtocolError& e) {
      nlohmann::json err{{"v", kProtocolVersion}, {"seq", 0}, {"type", "error"}, {"message", e.what()}};
      send(err.dump());
      closing_ = true;
      return;
    } catch (const std::exception& e) {
      nlohmann::json err{{"v", kProtocolVersion}, {"seq", 0}, {"type", "error"}, {"message", e.what()}};
      send(err.dump());
    }
    read();
  }

  void schedule_tick() {
    timer_.expires_at(next_);
    timer_.async_wait(beast::bind_front_handler(&Connection::on_tick, shared_from_this()));
  }

  void on_tick(beast::error_code ec) {
    if (ec || closed_) return;
    next_ += period_;
    if (!closing_) {
      try {
        for (auto& m : session_.tick(now())) send(m.dump());
      } catch (const std::exception& e) {
        log().error("session tick failed: {}", e.what());
        closing_ = true;
      }
    }
    schedule_tick();
  }

  void send(std::string text) {
    outbox_.push_back(std::move(text));
    if (!writing_) write_next();
  }

  void write_next() {
    if (outbox_.empty()) {
      writing_ = false;
      if (closing_ && !closed_) {
        closed_ = true;
        timer_.cancel();
        ws_.async_close(websocket::close_code::policy_error,
                        [self = shared_from_this()](beast::error_code) {});
      }
      return;
    }
    writing_ = true;
    ws_.async_write(net::buffer(outbox_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->outbox_.pop_front();
                      if (ec) {
                        self->closed_ = true;
                        self->timer_.cancel();
                        return;
                      }
                      self->write_next();
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  Session session_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  bool writing_ = false;
  bool closing_ = false;
  bool closed_ = false;
  std::chrono::steady_clock::duration period_;
  std::chrono::steady_clock::time_point start_;
  std::chrono::steady_clock::time_point next_;
};

}  // namespace

struct Server::Impl {
  Impl(const ArmModel& m, std::shared_ptr<const InterpolationVolume> v, ServerConfig c)
      : model(m), volume(std::move(v)), cfg(std::move(c)), acceptor(ioc) {}

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec != net::error::operation_aborted) log().warn("accept failed: {}", ec.message());
        if (!acceptor.is_open()) return;
      } else {
        try {
          std::make_shared<Connection>(std::move(socket), model, volume, cfg.session)->run();
        } catch (const std::exception& e) {
          log().error("could not start session: {}", e.what());
        }
      }
      accept();
    });
  }

  ArmModel model;
  std::shared_ptr<const InterpolationVolume> volume;
  ServerConfig cfg;
  net::io_context ioc{1};
  tcp::acceptor acceptor;
};

Server::Server(const ArmModel& model, std::shared_ptr<const InterpolationVolume> volume,
               ServerConfig cfg)
    : impl_(std::make_unique<Impl>(model, std::move(volume), std::move(cfg))) {}

Server::~Server() { stop(); }

unsigned short Server::listen() {
  auto& a = impl_->acceptor;
  const tcp::endpoint ep(net::ip::make_address(impl_->cfg.address), impl_->cfg.port);
  a.open(ep.protocol());
  a.set_option(net::socket_base::reuse_address(true));
  a.bind(ep);
  a.listen(net::socket_base::max_listen_connections);
  impl_->accept();
  return a.local_endpoint().port();
}

void Server::run() { impl_->ioc.run(); }

void Server::stop() { impl_->ioc.stop(); }

}  // namespace ikk
