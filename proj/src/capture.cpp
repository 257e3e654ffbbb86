#include "ikk/capture.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/SVD>

#include "ikk/errors.hpp"
#include "ikk/logging.hpp"
#include "ikk/simuser.hpp"

namespace ikk {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("not a number: '" + std::string(s) + "'", line);
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> column_names(int dof) {
  std::vector<std::string> cols{"t"};
  for (int i = 0; i < dof; ++i) cols.push_back("q" + std::to_string(i));
  for (const char* c : {"px", "py", "pz", "ow", "ox", "oy", "oz"}) cols.emplace_back(c);
  return cols;
}

double infer_rate(const std::vector<Frame>& frames) {
  if (frames.size() < 2) return 100.0;
  std::vector<double> dts;
  dts.reserve(frames.size() - 1);
  for (std::size_t i = 1; i < frames.size(); ++i) dts.push_back(frames[i].t - frames[i - 1].t);
  auto mid = dts.begin() + dts.size() / 2;
  std::nth_element(dts.begin(), mid, dts.end());
  if (!(*mid > 0.0)) throw ValidationError("timestamps are not increasing");
  return 1.0 / *mid;
}

Frame frame_from_values(const std::vector<double>& v, int dof, std::size_t line) {
  Frame f;
  f.t = v[0];
  f.q = Eigen::Map<const VecX>(v.data() + 1, dof);
  f.hand.position = Vec3(v[dof + 1], v[dof + 2], v[dof + 3]);
  Quat o(v[dof + 4], v[dof + 5], v[dof + 6], v[dof + 7]);
  if (std::abs(o.norm() - 1.0) > 1e-6) {
    throw ParseError("orientation quaternion is not unit length", line);
  }
  f.hand.orientation = o;
  return f;
}

Recording recording_from_json(const nlohmann::json& doc, const std::string& label) {
  if (!doc.contains("frames") || !doc["frames"].is_array()) {
    throw ParseError("recording JSON needs a \"frames\" array", 1);
  }
  const auto& frames = doc["frames"];
  Recording rec;
  rec.label = doc.value("label", label);
  if (frames.empty()) return rec;
  int dof = 0;
  while (frames[0].contains("q" + std::to_string(dof))) ++dof;
  if (dof == 0) throw ParseError("recording JSON has no joint columns", 1);
  const auto cols = column_names(dof);
  std::vector<double> v(cols.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (!frames[k].contains(cols[c]) || !frames[k][cols[c]].is_number()) {
        throw ParseError("frame " + std::to_string(k) + " lacks numeric field " + cols[c], k + 1);
      }
      v[c] = frames[k][cols[c]].get<double>();
    }
    rec.frames.push_back(frame_from_values(v, dof, k + 1));
  }
  rec.rate_hz = doc.contains("rate_hz") ? doc["rate_hz"].get<double>() : infer_rate(rec.frames);
  return rec;
}

nlohmann::json recording_to_json(const Recording& rec) {
  nlohmann::json frames = nlohmann::json::array();
  const int dof = rec.frames.empty() ? 0 : static_cast<int>(rec.frames.front().q.size());
  const auto cols = column_names(dof);
  for (const auto& f : rec.frames) {
    nlohmann::json row;
    row["t"] = f.t;
    for (int i = 0; i < dof; ++i) row[cols[i + 1]] = f.q[i];
    const auto& p = f.hand.position;
    const auto& o = f.hand.orientation;
    row["px"] = p.x();
    row["py"] = p.y();
    row["pz"] = p.z();
    row["ow"] = o.w();
    row["ox"] = o.x();
    row["oy"] = o.y();
    row["oz"] = o.z();
    frames.push_back(std::move(row));
  }
  return {{"label", rec.label}, {"rate_hz", rec.rate_hz}, {"frames", std::move(frames)}};
}

/// Rotation vector of Ra * Rb^-1.
Vec3 rotation_log(const Quat& a, const Quat& b) {
  Eigen::AngleAxisd aa(a * b.conjugate());
  double angle = aa.angle();
  Vec3 axis = aa.axis();
  if (angle > std::numbers::pi) {
    angle = 2.0 * std::numbers::pi - angle;
    axis = -axis;
  }
  return angle * axis;
}

std::vector<Vec3> moving_average(const std::vector<Vec3>& v, int window) {
  const int n = static_cast<int>(v.size());
  const int h = window / 2;
  std::vector<Vec3> out(v.size(), Vec3::Zero());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - h);
    const int hi = std::min(n - 1, i + h);
    Vec3 s = Vec3::Zero();
    for (int k = lo; k <= hi; ++k) s += v[k];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

double conditioning(const MatX& J) {
  Eigen::JacobiSVD<MatX> svd(J);
  const auto& s = svd.singularValues();
  return s[0] > 0.0 ? s[s.size() - 1] / s[0] : 0.0;
}

}  // namespace

void validate_recording(const Recording& rec) {
  if (!(rec.rate_hz > 0.0) || !std::isfinite(rec.rate_hz)) {
    throw ValidationError("recording '" + rec.label + "': sampling rate must be positive");
  }
  const double dt = 1.0 / rec.rate_hz;
  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    const double t = rec.frames[i].t;
    if (!std::isfinite(t) || t < 0.0) {
      throw ValidationError("recording '" + rec.label + "': bad timestamp at frame " +
                            std::to_string(i));
    }
    if (i == 0) continue;
    const double step = t - rec.frames[i - 1].t;
    if (!(step > 0.0)) {
      throw ValidationError("recording '" + rec.label + "': timestamps not increasing at frame " +
                            std::to_string(i));
    }
    if (std::abs(step - dt) > 0.2 * dt) {
      throw ValidationError("recording '" + rec.label + "': irregular sampling at frame " +
                            std::to_string(i));
    }
  }
}

HandKinematics estimate_hand_kinematics(const Recording& rec, int window) {
  if (window < 1 || window % 2 == 0) throw ContractViolation("smoothing window must be odd and >= 1");
  const auto& fr = rec.frames;
  const std::size_t n = fr.size();
  HandKinematics out;
  if (n == 0) return out;
  if (n < static_cast<std::size_t>(window)) {
    throw InsufficientData("recording '" + rec.label + "' is shorter than the smoothing window");
  }
  std::vector<Vec3> lin(n, Vec3::Zero()), ang(n, Vec3::Zero());
  if (n >= 2) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = i == 0 ? 0 : i - 1;
      const std::size_t b = i + 1 == n ? n - 1 : i + 1;
      const double dt = fr[b].t - fr[a].t;
      lin[i] = (fr[b].hand.position - fr[a].hand.position) / dt;
      ang[i] = rotation_log(fr[b].hand.orientation, fr[a].hand.orientation) / dt;
    }
  }
  lin = moving_average(lin, window);
  ang = moving_average(ang, window);
  out.linear_speed.resize(n);
  out.angular_speed.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.linear_speed[i] = lin[i].norm();
    out.angular_speed[i] = ang[i].norm();
  }
  return out;
}

std::vector<SteadySegment> segment_steady(const Recording& rec, const SteadyConfig& cfg) {
  if (!(cfg.v_lin_max > 0.0) || !(cfg.v_ang_max > 0.0)) {
    throw ContractViolation("speed thresholds must be positive");
  }
  std::vector<SteadySegment> out;
  if (rec.frames.size() < static_cast<std::size_t>(std::max(cfg.window, 1))) return out;
  const auto kin = estimate_hand_kinematics(rec, cfg.window);
  const std::size_t n = rec.frames.size();
  std::size_t i = 0;
  while (i < n) {
    if (kin.linear_speed[i] > cfg.v_lin_max || kin.angular_speed[i] > cfg.v_ang_max) {
      ++i;
      continue;
    }
    std::size_t j = i;
    SteadySegment seg;
    seg.begin = i;
    Vec3 sum = Vec3::Zero();
    while (j < n && kin.linear_speed[j] <= cfg.v_lin_max && kin.angular_speed[j] <= cfg.v_ang_max) {
      sum += rec.frames[j].hand.position;
      seg.max_linear_speed = std::max(seg.max_linear_speed, kin.linear_speed[j]);
      seg.max_angular_speed = std::max(seg.max_angular_speed, kin.angular_speed[j]);
      ++j;
    }
    seg.end = j;
    if (seg.size() >= cfg.min_len) {
      seg.mean_position = sum / static_cast<double>(seg.size());
      out.push_back(seg);
    }
    i = j;
  }
  return out;
}

Recording slice(const Recording& rec, std::size_t begin, std::size_t end) {
  if (begin > end || end > rec.frames.size()) throw ContractViolation("slice out of range");
  Recording out;
  out.rate_hz = rec.rate_hz;
  out.label = rec.label;
  out.frames.assign(rec.frames.begin() + begin, rec.frames.begin() + end);
  return out;
}

std::string recording_to_csv(const Recording& rec) {
  const int dof = rec.frames.empty() ? 0 : static_cast<int>(rec.frames.front().q.size());
  std::string out;
  const auto cols = column_names(dof);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out += ',';
    out += cols[c];
  }
  out += '\n';
  for (const auto& f : rec.frames) {
    if (f.q.size() != dof) throw ContractViolation("frames disagree on joint count");
    out += format_double(f.t);
    for (int i = 0; i < dof; ++i) out += ',' + format_double(f.q[i]);
    for (int i = 0; i < 3; ++i) out += ',' + format_double(f.hand.position[i]);
    const auto& o = f.hand.orientation;
    for (double v : {o.w(), o.x(), o.y(), o.z()}) out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

Recording recording_from_csv(const std::string& text, const std::string& label) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) break;
  }
  for (auto h : split(line, ',')) header.push_back(trim(h));
  if (header.size() < 9 || header.front() != "t") {
    throw ParseError("header must be t,q0..q{n-1},px,py,pz,ow,ox,oy,oz", lineno);
  }
  const int dof = static_cast<int>(header.size()) - 8;
  if (header != column_names(dof)) {
    throw ParseError("header must be t,q0..q{n-1},px,py,pz,ow,ox,oy,oz", lineno);
  }
  Recording rec;
  rec.label = label;
  std::vector<double> values(header.size());
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       lineno);
    }
    for (std::size_t c = 0; c < fields.size(); ++c) values[c] = parse_double(fields[c], lineno);
    if (!rec.frames.empty() && !(values[0] > rec.frames.back().t)) {
      throw ValidationError("timestamps not increasing at line " + std::to_string(lineno));
    }
    rec.frames.push_back(frame_from_values(values, dof, lineno));
  }
  rec.rate_hz = infer_rate(rec.frames);
  return rec;
}

Recording load_recording(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open recording " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string label = path.stem().string();
  if (path.extension() == ".json") {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what(), 1);
    }
    auto rec = recording_from_json(doc, label);
    validate_recording(rec);
    return rec;
  }
  auto rec = recording_from_csv(ss.str(), label);
  validate_recording(rec);
  return rec;
}

void save_recording(const Recording& rec, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  if (path.extension() == ".json") {
    out << recording_to_json(rec).dump(1) << '\n';
  } else {
    out << recording_to_csv(rec);
  }
}

// ---------------------------------------------------------------------------

std::vector<Vec3> calibration_layout(const WorkspaceBox& box, std::size_t n_points) {
  if (n_points == 0 || n_points > 14) throw ContractViolation("calibration layout holds 1 to 14 points");
  if (!((box.max - box.min).array() > 0.0).all()) throw ContractViolation("calibration box is empty");
  static const double unit[14][3] = {
      {0, 0, 0}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1},  // a regular tetrahedron of the cube
      {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1},
      {0.5, 0.5, 1}, {0.5, 0.5, 0},
      {1, 0.5, 0.5}, {0, 0.5, 0.5}, {0.5, 1, 0.5}, {0.5, 0, 0.5},
  };
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < n_points; ++i) {
    Vec3 u(unit[i][0], unit[i][1], unit[i][2]);
    out.push_back(box.min + u.cwiseProduct(box.max - box.min));
  }
  return out;
}

JointVector nominal_configuration(const ArmModel& model) {
  JointVector q = 0.5 * (model.lower_limits() + model.upper_limits());
  if (model.dof() == 7) {
    // Elbow bent about 113 degrees, hand in front of the shoulder; well
    // conditioned over the default calibration box.
    q << -0.68, 0.02, -0.22, 1.98, -0.29, 0.04, -0.44;
    q = model.clamp(q);
  }
  return q;
}

JointVector walk_self_motion(const ArmModel& model, const JointVector& q, const HandPose& hold,
                             double ds, VecX& dir, double max_step) {
  if (!(max_step > 0.0)) throw ContractViolation("walk step must be positive");
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(ds) / max_step)));
  const double h = ds / steps;
  JointVector x = q;
  for (int s = 0; s < steps; ++s) {
    const auto J = jacobian(model, x).entries;
    const MatX N = null_space_basis(J, 1e-9);
    if (N.cols() == 0) throw DegenerateRange("no self-motion at this configuration");
    VecX v;
    if (dir.size() == x.size()) {
      v = N * (N.transpose() * dir);
      if (v.norm() < 1e-12) v = N.col(0);
    } else {
      v = N.col(0);
    }
    v.normalize();
    dir = v;
    x += h * v;
    for (int it = 0; it < 20; ++it) {
      const VecX err = pose_error(hold, forward_kinematics(model, x), model.task_dim());
      if (err.norm() < 1e-13) break;
      x += damped_pinv(jacobian(model, x).entries, 1e-9) * err;
    }
  }
  return x;
}

SelfMotionRange self_motion_range(const ArmModel& model, const JointVector& q0,
                                  const SynthesisConfig& cfg) {
  const HandPose hold = forward_kinematics(model, q0);
  constexpr double kStep = 0.01;
  constexpr double kLimitMargin = 0.05;
  const VecX lo = model.lower_limits().array() + kLimitMargin;
  const VecX hi = model.upper_limits().array() - kLimitMargin;
  SelfMotionRange range;
  for (int sign : {+1, -1}) {
    VecX dir;
    JointVector q = q0;
    double s = 0.0;
    while (s + kStep <= cfg.sweep_cap + 1e-12) {
      JointVector next = walk_self_motion(model, q, hold, sign * kStep, dir);
      if ((next.array() < lo.array()).any() || (next.array() > hi.array()).any()) break;
      if (conditioning(jacobian(model, next).entries) < cfg.min_conditioning) break;
      q = next;
      s += kStep;
    }
    if (sign > 0) {
      range.upper = s;
    } else {
      range.lower = -s;
    }
  }
  return range;
}

CalibrationSession synthesize_calibration(const ArmModel& model, std::uint64_t seed,
                                          const SynthesisConfig& cfg) {
  if (!(cfg.dwell_s > 0.0) || !(cfg.rate_hz > 0.0)) throw ContractViolation("dwell and rate must be positive");
  if (!(cfg.sweep_fraction > 0.0 && cfg.sweep_fraction <= 1.0)) {
    throw ContractViolation("sweep fraction must be in (0, 1]");
  }
  const auto targets = calibration_layout(cfg.box, cfg.n_points);
  const JointVector q_nom = nominal_configuration(model);
  const Quat orientation = forward_kinematics(model, q_nom).orientation;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(0.3, 0.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  CalibrationSession session;
  session.model = model;
  session.provenance = CalibrationSession::Provenance::Synthetic;
  session.seed = seed;
  const auto n_frames = static_cast<std::size_t>(std::llround(cfg.dwell_s * cfg.rate_hz));

  for (std::size_t p = 0; p < targets.size(); ++p) {
    char label[16];
    std::snprintf(label, sizeof(label), "P%02zu", p + 1);
    const HandPose target{targets[p], orientation};
    JointVector q;
    try {
      q = solve_ik(model, target, q_nom, q_nom);
    } catch (const UnreachableTarget& e) {
      throw UnreachableTarget(std::string("calibration point ") + label + ": " + e.what());
    }
    const HandPose hold = forward_kinematics(model, q);
    const auto range = self_motion_range(model, q, cfg);
    if (range.upper - range.lower < 1e-3) {
      throw DegenerateRange(std::string("calibration point ") + label + ": no feasible self-motion");
    }
    const double centre = 0.5 * (range.lower + range.upper);
    const double amplitude = cfg.sweep_fraction * 0.5 * (range.upper - range.lower);
    const double f = freq(rng);
    const double phi = phase(rng);

    VecX dir;
    JointVector anchor = walk_self_motion(model, q, hold, centre, dir);
    CalibrationPoint point;
    point.label = label;
    point.target = targets[p];
    point.anchor = anchor;
    point.recording.label = label;
    point.recording.rate_hz = cfg.rate_hz;
    point.recording.frames.reserve(n_frames);

    double s_prev = 0.0;
    JointVector x = anchor;
    for (std::size_t k = 0; k < n_frames; ++k) {
      const double t = static_cast<double>(k) / cfg.rate_hz;
      const double s = amplitude * std::sin(2.0 * std::numbers::pi * f * t + phi);
      x = walk_self_motion(model, x, hold, s - s_prev, dir);
      s_prev = s;
      point.recording.frames.push_back({t, x, forward_kinematics(model, x)});
    }
    log().debug("synthetic point {}: range [{:.3f}, {:.3f}] rad, f = {:.3f} Hz", label, range.lower,
                range.upper, f);
    session.points.push_back(std::move(point));
  }
  return session;
}

CalibrationSession load_session(const fs::path& manifest, const std::optional<ArmModel>& model) {
  std::ifstream in(manifest);
  if (!in) throw ValidationError("cannot open session manifest " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(manifest.string() + ": " + e.what(), 1);
  }
  if (!doc.contains("points") || !doc["points"].is_array() || doc["points"].empty()) {
    throw ValidationError(manifest.string() + ": manifest needs a non-empty \"points\" array");
  }
  const fs::path base = manifest.parent_path();
  CalibrationSession session;
  if (model) {
    session.model = *model;
  } else if (doc.contains("arm")) {
    fs::path arm = doc["arm"].get<std::string>();
    session.model = load_arm_model(arm.is_absolute() ? arm : base / arm);
  }
  session.provenance = CalibrationSession::Provenance::Recorded;
  for (const auto& p : doc["points"]) {
    CalibrationPoint point;
    point.label = p.at("label").get<std::string>();
    fs::path path = p.at("path").get<std::string>();
    point.recording = load_recording(path.is_absolute() ? path : base / path);
    point.recording.label = point.label;
    for (const auto& f : point.recording.frames) {
      if (f.q.size() != session.model.dof()) {
        throw ValidationError("point " + point.label + ": recording has " +
                              std::to_string(f.q.size()) + " joints, arm has " +
                              std::to_string(session.model.dof()));
      }
    }
    validate_recording(point.recording);
    session.points.push_back(std::move(point));
  }
  return session;
}

void save_session(const CalibrationSession& session, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json doc;
  doc["points"] = nlohmann::json::array();
  for (const auto& p : session.points) {
    const std::string file = p.label + ".csv";
    save_recording(p.recording, dir / file);
    nlohmann::json entry{{"label", p.label}, {"path", file}};
    if (p.target) entry["target"] = {p.target->x(), p.target->y(), p.target->z()};
    doc["points"].push_back(std::move(entry));
  }
  {
    std::ofstream arm(dir / "arm.json");
    arm << to_json(session.model).dump(2) << '\n';
  }
  doc["arm"] = "arm.json";
  doc["provenance"] = session.provenance == CalibrationSession::Provenance::Synthetic ? "synthetic" : "recorded";
  doc["seed"] = session.seed;
  std::ofstream out(dir / "session.json");
  if (!out) throw ValidationError("cannot write " + (dir / "session.json").string());
  out << doc.dump(2) << '\n';
}

}  // namespace ikk
