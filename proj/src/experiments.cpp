#include "ikk/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "ikk/errors.hpp"
#include "ikk/logging.hpp"

namespace ikk {

namespace {

constexpr double kLeadIn = 2.0;

struct Segment {
  double dt;
  double target;  ///< absolute value, or NaN for a relative step
  double step;    ///< magnitude of a relative step
  bool fast;
};

/// Monotone piecewise-cubic Hermite slopes (Fritsch-Carlson), first slope 0.
std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> h(n - 1), delta(n - 1), m(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    delta[i] = (y[i + 1] - y[i]) / h[i];
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0.0) {
      m[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  m[0] = 0.0;
  if (n >= 3) {
    // One-sided shape-preserving end slope.
    const std::size_t k = n - 2;
    double e = ((2.0 * h[k] + h[k - 1]) * delta[k] - h[k] * delta[k - 1]) / (h[k] + h[k - 1]);
    if (e * delta[k] <= 0.0) {
      e = 0.0;
    } else if (delta[k] * delta[k - 1] < 0.0 && std::abs(e) > 3.0 * std::abs(delta[k])) {
      e = 3.0 * delta[k];
    }
    m[n - 1] = e;
  } else {
    m[n - 1] = delta[0];
  }
  return m;
}

double hermite(double x0, double x1, double y0, double y1, double m0, double m1, double x) {
  const double h = x1 - x0;
  const double s = (x - x0) / h;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * m0 + (-2 * s3 + 3 * s2) * y1 +
         (s3 - s2) * h * m1;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

const std::vector<std::string> kMetrics{"signal", "radius_cm", "position_cm"};

}  // namespace

ReferenceProfile generate_profile(std::uint64_t seed, double duration_s, double rate_hz) {
  if (!(duration_s > kLeadIn + 5.0)) throw ContractViolation("profile duration must exceed the lead-in by 5 s");
  if (!(rate_hz > 0.0)) throw ContractViolation("profile rate must be positive");
  std::mt19937_64 rng(mix_seed(seed, 0x5eed));
  auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const int style = static_cast<int>((seed + 2) % 3);

  std::vector<Segment> segs;
  double level = 0.0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (style == 0) {
    level = U(30.0, 70.0);
    const int fast_at = static_cast<int>(U(1.0, 5.0));
    for (int i = 0; i < 6; ++i) {
      if (i == fast_at) {
        segs.push_back({U(1.5, 1.75), nan, U(35.0, 45.0), true});
      } else {
        segs.push_back({U(3.5, 5.0), nan, U(10.0, 30.0), false});
      }
    }
  } else if (style == 1) {
    level = U(40.0, 60.0);
    segs.push_back({U(3.0, 4.0), U(86.0, 92.0), 0.0, false});
    segs.push_back({U(2.0, 3.0), nan, U(2.0, 5.0), false});
    segs.push_back({U(2.0, 2.8), U(27.0, 33.0), 0.0, true});
    const int extra = 3 + static_cast<int>(U(0.0, 2.0));
    for (int i = 0; i < extra; ++i) segs.push_back({U(2.5, 4.0), nan, U(10.0, 35.0), false});
  } else {
    level = U(20.0, 80.0);
    const int count = 6 + static_cast<int>(U(0.0, 3.0));
    const int fast_at = static_cast<int>(U(0.0, count));
    for (int i = 0; i < count; ++i) {
      if (i == fast_at) {
        segs.push_back({1.5, nan, U(35.0, 45.0), true});
      } else {
        segs.push_back({U(1.8, 3.5), nan, U(10.0, 45.0), false});
      }
    }
  }

  // Stretch the ordinary segments so the knots fill the profile exactly.
  double fast_total = 0.0, slow_total = 0.0;
  for (const auto& s : segs) (s.fast ? fast_total : slow_total) += s.dt;
  const double scale = (duration_s - kLeadIn - fast_total) / slow_total;

  std::vector<double> kx{0.0, kLeadIn}, ky{level, level};
  double v = level;
  for (const auto& s : segs) {
    double next = s.target;
    if (std::isnan(next)) {
      double dir = U(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      if (v + s.step > 95.0) dir = -1.0;
      if (v - s.step < 5.0) dir = 1.0;
      next = std::clamp(v + dir * s.step, 5.0, 95.0);
    }
    kx.push_back(kx.back() + (s.fast ? s.dt : s.dt * scale));
    ky.push_back(next);
    v = next;
  }
  kx.back() = duration_s;

  const auto m = pchip_slopes(kx, ky);
  ReferenceProfile p;
  p.rate_hz = rate_hz;
  p.lead_in_s = kLeadIn;
  p.seed = seed;
  p.label = "traj" + std::to_string(seed);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
  p.values.resize(n);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate_hz;
    while (seg + 2 < kx.size() && t >= kx[seg + 1]) ++seg;
    const double val = t <= kLeadIn ? level
                                    : hermite(kx[seg], kx[seg + 1], ky[seg], ky[seg + 1], m[seg],
                                              m[seg + 1], t);
    p.values[k] = std::clamp(val, 0.0, 100.0);
  }
  return p;
}

double rmse(std::span<const double> actual, std::span<const double> target) {
  if (actual.size() != target.size()) throw ContractViolation("rmse: traces differ in length");
  if (actual.empty()) throw ContractViolation("rmse: empty traces");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = actual[i] - target[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(actual.size()));
}

void validate(const SphereSchedule& s) {
  if (s.radii.size() != 6) throw ValidationError("sphere schedule needs six radii");
  if (s.centres.empty()) throw ValidationError("sphere schedule needs at least one target centre");
  if (!(s.step_s > 0.0) || !(s.align_s >= 0.0) || !(s.initial_radius > 0.0)) {
    throw ValidationError("sphere schedule timing/radius must be positive");
  }
  for (double r : s.radii) {
    if (!(r > 0.0)) throw ValidationError("sphere radii must be positive");
  }
}

SphereSchedule make_sphere_schedule(const InterpolationVolume& volume, std::uint64_t seed,
                                    const RadiusMap& map) {
  std::mt19937_64 rng(mix_seed(seed, 0x5a4e));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SphereSchedule s;
  const double lo = map(13.0), hi = map(93.0);
  double prev = s.initial_radius;
  for (int i = 0; i < 6; ++i) {
    double r = 0.0;
    do {
      r = lo + (hi - lo) * unit(rng);
    } while (std::abs(r - prev) < 0.08);
    s.radii.push_back(r);
    prev = r;
  }
  const Vec3 c = volume_centre(volume);
  Vec3 lo_box = c, hi_box = c;
  for (const auto& n : volume.nodes) {
    lo_box = lo_box.cwiseMin(n.node_position);
    hi_box = hi_box.cwiseMax(n.node_position);
  }
  const Vec3 half = 0.5 * (hi_box - lo_box);
  std::normal_distribution<double> g(0.0, 1.0);
  while (s.centres.size() < 3) {
    Vec3 d(g(rng), g(rng), g(rng));
    if (d.norm() < 1e-9) continue;
    d.normalize();
    const Vec3 p = c + 0.35 * d.cwiseProduct(half);
    if (strictly_inside_hull(volume, p)) s.centres.push_back(p);
  }
  return s;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"gains", "control", "profile_seeds", "repetitions",
                                           "duration_s", "align_s", "radius_map", "seed"};
  ExperimentConfig cfg;
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown experiment config key '" + key + "'");
  }
  try {
    if (j.contains("gains")) {
      static const std::set<std::string> gk{"k_task", "k_null", "damping", "speed_limit",
                                            "reaction_delay", "noise", "preview"};
      const auto& g = j["gains"];
      for (const auto& [key, _] : g.items()) {
        if (!gk.count(key)) throw ValidationError("unknown gain '" + key + "'");
      }
      cfg.gains.k_task = g.value("k_task", cfg.gains.k_task);
      cfg.gains.k_null = g.value("k_null", cfg.gains.k_null);
      cfg.gains.damping = g.value("damping", cfg.gains.damping);
      cfg.gains.speed_limit = g.value("speed_limit", cfg.gains.speed_limit);
      cfg.gains.reaction_delay = g.value("reaction_delay", cfg.gains.reaction_delay);
      cfg.gains.noise = g.value("noise", cfg.gains.noise);
      cfg.gains.preview = g.value("preview", cfg.gains.preview);
    }
    if (j.contains("control")) {
      static const std::set<std::string> ck{"time_constant", "max_slew", "clamp", "invert"};
      const auto& c = j["control"];
      for (const auto& [key, _] : c.items()) {
        if (!ck.count(key)) throw ValidationError("unknown control setting '" + key + "'");
      }
      cfg.control.time_constant = c.value("time_constant", cfg.control.time_constant);
      cfg.control.max_slew = c.value("max_slew", cfg.control.max_slew);
      cfg.control.invert = c.value("invert", cfg.control.invert);
      const auto clamp = c.value("clamp", std::string("saturate"));
      if (clamp != "saturate" && clamp != "hold") throw ValidationError("clamp must be saturate or hold");
      cfg.control.clamp = clamp == "hold" ? ClampPolicy::Hold : ClampPolicy::Saturate;
    }
    cfg.profile_seeds = j.value("profile_seeds", cfg.profile_seeds);
    cfg.repetitions = j.value("repetitions", cfg.repetitions);
    cfg.duration_s = j.value("duration_s", cfg.duration_s);
    cfg.align_s = j.value("align_s", cfg.align_s);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("radius_map")) {
      cfg.radius_map.r0 = j["radius_map"].value("r0", cfg.radius_map.r0);
      cfg.radius_map.r100 = j["radius_map"].value("r100", cfg.radius_map.r100);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed experiment config: ") + e.what());
  }
  validate(cfg.gains);
  validate(cfg.control);
  if (cfg.repetitions < 1 || cfg.profile_seeds.empty()) {
    throw ValidationError("experiment needs at least one profile and one repetition");
  }
  return cfg;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  const auto& g = cfg.gains;
  return {
      {"gains",
       {{"k_task", g.k_task}, {"k_null", g.k_null}, {"damping", g.damping},
        {"speed_limit", g.speed_limit}, {"reaction_delay", g.reaction_delay}, {"noise", g.noise},
        {"preview", g.preview}}},
      {"control",
       {{"time_constant", cfg.control.time_constant}, {"max_slew", cfg.control.max_slew},
        {"clamp", cfg.control.clamp == ClampPolicy::Hold ? "hold" : "saturate"},
        {"invert", cfg.control.invert}}},
      {"profile_seeds", cfg.profile_seeds},
      {"repetitions", cfg.repetitions},
      {"duration_s", cfg.duration_s},
      {"align_s", cfg.align_s},
      {"radius_map", {{"r0", cfg.radius_map.r0}, {"r100", cfg.radius_map.r100}}},
      {"seed", cfg.seed},
  };
}

std::vector<TrialResult> run_experiment1(const ArmModel& model,
                                         std::shared_ptr<const InterpolationVolume> volume,
                                         const ExperimentConfig& cfg, ControllerKind controller) {
  std::vector<TrialResult> out;
  for (std::size_t j = 0; j < cfg.profile_seeds.size(); ++j) {
    const auto profile = generate_profile(cfg.profile_seeds[j], cfg.duration_s);
    for (int r = 0; r < cfg.repetitions; ++r) {
      const std::uint64_t seed = mix_seed(mix_seed(cfg.seed, cfg.profile_seeds[j]), r + 1);
      TrialResult res;
      if (controller == ControllerKind::IKK) {
        TrackingOptions opts;
        opts.align_s = cfg.align_s;
        opts.control = cfg.control;
        opts.seed = seed;
        res = run_tracking(model, volume, cfg.gains, profile, opts).result;
      } else {
        // The direct controller reads the reference and writes it unchanged.
        const double dt = 1.0 / profile.rate_hz;
        const auto n = static_cast<std::size_t>(std::llround(profile.duration() / dt));
        for (std::size_t k = 1; k <= n; ++k) {
          const double t = k * dt;
          res.t.push_back(t);
          res.reference.push_back(profile.value_at(t));
          res.actual.push_back(profile.value_at(t));
        }
        res.rmse["signal"] = rmse(res.actual, res.reference);
        res.seed = seed;
      }
      res.experiment = "exp1";
      res.controller = controller;
      res.trajectory = static_cast<int>(j) + 1;
      res.repetition = r + 1;
      res.label = std::string(controller == ControllerKind::Direct ? "direct-" : "") + "traj" +
                  std::to_string(j + 1) + "-rep" + std::to_string(r + 1);
      if (!res.success) log().warn("trial {} failed: {}", res.label, res.note);
      out.push_back(std::move(res));
    }
  }
  return out;
}

std::vector<TrialResult> run_experiment2(const ArmModel& model,
                                         std::shared_ptr<const InterpolationVolume> volume,
                                         const ExperimentConfig& cfg, const SphereSchedule& schedule,
                                         SphereMode mode) {
  validate(schedule);
  const RadiusMap& map = cfg.radius_map;
  if (!(map.r100 != map.r0)) throw ValidationError("radius map is degenerate");
  auto to_value = [&](double r) { return 100.0 * (r - map.r0) / (map.r100 - map.r0); };

  ReferenceProfile profile;
  profile.rate_hz = 100.0;
  profile.lead_in_s = 0.0;
  profile.label = "spheres";
  const auto per_step = static_cast<std::size_t>(std::llround(schedule.step_s * profile.rate_hz));
  for (double r : schedule.radii) {
    for (std::size_t k = 0; k < per_step; ++k) profile.values.push_back(std::clamp(to_value(r), 0.0, 100.0));
  }

  std::vector<TrialResult> out;
  for (std::size_t i = 0; i < schedule.centres.size(); ++i) {
    TrackingOptions opts;
    opts.align_s = schedule.align_s;
    opts.control = cfg.control;
    opts.seed = mix_seed(mix_seed(cfg.seed, 0xe2), i + 1);
    opts.align_value = std::clamp(to_value(schedule.initial_radius), 0.0, 100.0);
    opts.radius_map = std::make_pair(map.r0, (map.r100 - map.r0) / 100.0);
    if (mode == SphereMode::Parallel) opts.target_position = schedule.centres[i];
    auto res = run_tracking(model, volume, cfg.gains, profile, opts).result;
    res.experiment = mode == SphereMode::Parallel ? "exp2-parallel" : "exp2-single";
    res.trajectory = static_cast<int>(i) + 1;
    res.repetition = 1;
    res.label = "trial" + std::to_string(i + 1);
    if (!res.success) log().warn("trial {} failed: {}", res.label, res.note);
    out.push_back(std::move(res));
  }
  return out;
}

// ---------------------------------------------------------------------------

double LearningCurveFit::operator()(double x) const {
  return theta4 / (theta3 + std::exp(x * theta1 + theta2)) + x_min;
}

double LearningCurveFit::plateau() const {
  if (theta1 < 0.0) return x_min + theta4 / theta3;
  if (theta1 > 0.0) return x_min;
  return (*this)(0.0);
}

namespace {

struct FitData {
  const double* y;
  std::size_t n;
  double x_min;
};

double curve_sse(const gsl_vector* v, void* params) {
  const auto* d = static_cast<const FitData*>(params);
  const double t1 = gsl_vector_get(v, 0);
  const double t2 = gsl_vector_get(v, 1);
  const double t3 = std::exp(gsl_vector_get(v, 2));
  const double t4 = gsl_vector_get(v, 3);
  double s = 0.0;
  for (std::size_t i = 0; i < d->n; ++i) {
    const double x = static_cast<double>(i + 1);
    const double f = t4 / (t3 + std::exp(x * t1 + t2)) + d->x_min;
    const double r = d->y[i] - f;
    s += r * r;
  }
  return std::isfinite(s) ? s : std::numeric_limits<double>::max();
}

}  // namespace

LearningCurveFit fit_learning_curve(std::span<const double> y, const FitOptions& opts) {
  if (y.size() < 5) throw ContractViolation("learning-curve fit needs at least 5 trials");
  if (opts.restarts < 1) throw ContractViolation("learning-curve fit needs at least one restart");
  for (double v : y) {
    if (!std::isfinite(v)) throw ContractViolation("learning-curve data must be finite");
  }
  FitData data{y.data(), y.size(), opts.x_min ? *opts.x_min : *std::min_element(y.begin(), y.end())};
  const double range = std::max(*std::max_element(y.begin(), y.end()) - data.x_min, 1e-6);

  gsl_set_error_handler_off();
  gsl_multimin_function fn{&curve_sse, 4, &data};
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 4);
  gsl_vector* x0 = gsl_vector_alloc(4);
  gsl_vector* step = gsl_vector_alloc(4);

  std::mt19937_64 rng(opts.seed);
  auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };

  LearningCurveFit best;
  best.x_min = data.x_min;
  best.residual = std::numeric_limits<double>::infinity();
  int finite_runs = 0;
  for (int r = 0; r < opts.restarts; ++r) {
    const double log3 = U(-4.0, 3.0);
    gsl_vector_set(x0, 0, U(-3.0, 3.0));
    gsl_vector_set(x0, 1, U(-8.0, 8.0));
    gsl_vector_set(x0, 2, log3);
    gsl_vector_set(x0, 3, std::exp(log3) * U(-1.5, 1.5) * range);
    gsl_vector_set(step, 0, 0.5);
    gsl_vector_set(step, 1, 1.0);
    gsl_vector_set(step, 2, 0.5);
    gsl_vector_set(step, 3, 0.5 * std::max(std::abs(gsl_vector_get(x0, 3)), range));
    gsl_multimin_fminimizer_set(s, &fn, x0, step);
    for (int it = 0; it < opts.max_iterations; ++it) {
      if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-12) == GSL_SUCCESS) break;
    }
    const double f = gsl_multimin_fminimizer_minimum(s);
    if (std::isfinite(f) && f < std::numeric_limits<double>::max()) {
      ++finite_runs;
      if (f < best.residual) {
        const gsl_vector* xm = gsl_multimin_fminimizer_x(s);
        best.theta1 = gsl_vector_get(xm, 0);
        best.theta2 = gsl_vector_get(xm, 1);
        best.theta3 = std::exp(gsl_vector_get(xm, 2));
        best.theta4 = gsl_vector_get(xm, 3);
        best.residual = f;
      }
    }
    best.best_trace.push_back(best.residual);
  }
  best.restarts = opts.restarts;
  gsl_vector_free(step);
  gsl_vector_free(x0);
  gsl_multimin_fminimizer_free(s);
  if (finite_runs == 0) {
    throw FitFailure("all " + std::to_string(opts.restarts) +
                     " restarts diverged (non-finite residual)");
  }
  return best;
}

nlohmann::json to_json(const LearningCurveFit& fit) {
  return {
      {"theta", {fit.theta1, fit.theta2, fit.theta3, fit.theta4}},
      {"x_min", fit.x_min},
      {"residual", fit.residual},
      {"plateau", fit.plateau()},
      {"restarts", fit.restarts},
  };
}

// ---------------------------------------------------------------------------

ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  throw ValidationError("unknown report format '" + s + "' (csv, json, markdown)");
}

namespace {

struct Row {
  std::vector<std::string> cells;
};

struct Tables {
  std::vector<std::string> trial_header;
  std::vector<Row> trials;
  std::vector<std::string> summary_header;
  std::vector<Row> summary;
  nlohmann::json json;
};

Tables build_tables(std::span<const TrialResult> results) {
  if (results.empty()) throw ContractViolation("report needs at least one result");
  std::vector<const TrialResult*> sorted;
  for (const auto& r : results) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const TrialResult* a, const TrialResult* b) {
    return std::tie(a->experiment, a->subject, a->controller, a->trajectory, a->repetition, a->label) <
           std::tie(b->experiment, b->subject, b->controller, b->trajectory, b->repetition, b->label);
  });

  std::vector<std::string> metrics;
  for (const auto& m : kMetrics) {
    for (const auto* r : sorted) {
      if (r->rmse.count(m)) {
        metrics.push_back(m);
        break;
      }
    }
  }

  Tables t;
  t.trial_header = {"experiment", "subject", "controller", "trajectory", "repetition", "label", "status"};
  for (const auto& m : metrics) t.trial_header.push_back(m);
  t.summary_header = {"experiment", "subject", "controller", "trajectory", "n", "failed"};
  for (const auto& m : metrics) {
    t.summary_header.push_back(m + "_mean");
    t.summary_header.push_back(m + "_std");
  }

  using Key = std::tuple<std::string, std::string, int, int>;
  std::map<Key, std::vector<const TrialResult*>> groups;
  t.json["trials"] = nlohmann::json::array();
  for (const auto* r : sorted) {
    Row row;
    row.cells = {r->experiment, r->subject, to_string(r->controller), std::to_string(r->trajectory),
                 std::to_string(r->repetition), r->label, r->success ? "OK" : "FAIL"};
    nlohmann::json jr{{"experiment", r->experiment}, {"subject", r->subject},
                      {"controller", to_string(r->controller)}, {"trajectory", r->trajectory},
                      {"repetition", r->repetition}, {"label", r->label}, {"success", r->success}};
    for (const auto& m : metrics) {
      const auto it = r->rmse.find(m);
      if (!r->success) {
        row.cells.push_back("FAIL");
        jr[m] = nullptr;
      } else if (it == r->rmse.end()) {
        row.cells.push_back("");
        jr[m] = nullptr;
      } else {
        row.cells.push_back(fixed4(it->second));
        jr[m] = it->second;
      }
    }
    t.trials.push_back(std::move(row));
    t.json["trials"].push_back(std::move(jr));
    groups[{r->experiment, r->subject, static_cast<int>(r->controller), r->trajectory}].push_back(r);
  }

  t.json["summary"] = nlohmann::json::array();
  for (const auto& [key, members] : groups) {
    const auto& [exp, subject, ctrl, traj] = key;
    int failed = 0;
    for (const auto* r : members) failed += r->success ? 0 : 1;
    Row row;
    row.cells = {exp, subject, to_string(static_cast<ControllerKind>(ctrl)), std::to_string(traj),
                 std::to_string(members.size() - failed), std::to_string(failed)};
    nlohmann::json js{{"experiment", exp}, {"subject", subject},
                      {"controller", to_string(static_cast<ControllerKind>(ctrl))},
                      {"trajectory", traj}, {"n", members.size() - failed}, {"failed", failed}};
    for (const auto& m : metrics) {
      std::vector<double> vals;
      for (const auto* r : members) {
        if (!r->success) continue;
        const auto it = r->rmse.find(m);
        if (it != r->rmse.end()) vals.push_back(it->second);
      }
      if (vals.empty()) {
        row.cells.push_back("");
        row.cells.push_back("");
        js[m] = nullptr;
      } else {
        row.cells.push_back(fixed4(mean_of(vals)));
        row.cells.push_back(fixed4(std_of(vals)));
        js[m] = {{"mean", mean_of(vals)}, {"std", std_of(vals)}};
      }
    }
    t.summary.push_back(std::move(row));
    t.json["summary"].push_back(std::move(js));
  }
  return t;
}

void csv_table(std::ostringstream& os, const std::vector<std::string>& header, const std::vector<Row>& rows) {
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.cells.size(); ++i) os << (i ? "," : "") << r.cells[i];
    os << '\n';
  }
}

void md_table(std::ostringstream& os, const std::vector<std::string>& header, const std::vector<Row>& rows) {
  os << '|';
  for (const auto& h : header) os << ' ' << h << " |";
  os << "\n|";
  for (std::size_t i = 0; i < header.size(); ++i) os << "---|";
  os << '\n';
  for (const auto& r : rows) {
    os << '|';
    for (const auto& c : r.cells) os << ' ' << c << " |";
    os << '\n';
  }
}

}  // namespace

std::string report(std::span<const TrialResult> results, ReportFormat format) {
  const auto t = build_tables(results);
  std::ostringstream os;
  switch (format) {
    case ReportFormat::Csv:
      csv_table(os, t.trial_header, t.trials);
      os << '\n';
      csv_table(os, t.summary_header, t.summary);
      break;
    case ReportFormat::Markdown:
      os << "## Trials\n\n";
      md_table(os, t.trial_header, t.trials);
      os << "\n## Summary (mean and sample std; FAIL rows excluded)\n\n";
      md_table(os, t.summary_header, t.summary);
      break;
    case ReportFormat::Json:
      os << t.json.dump(2) << '\n';
      break;
  }
  return os.str();
}

std::string report(const TimeTable& table, ReportFormat format) {
  if (table.users.size() != table.seconds.size()) throw ContractViolation("time table rows and users differ");
  std::size_t cols = 0;
  for (const auto& r : table.seconds) cols = std::max(cols, r.size());
  std::vector<std::string> header{"user"};
  for (std::size_t c = 0; c < cols; ++c) header.push_back("trial" + std::to_string(c + 1));
  header.push_back("mean");
  header.push_back("std");
  std::vector<Row> rows;
  nlohmann::json j{{"title", table.title}, {"rows", nlohmann::json::array()}};
  for (std::size_t u = 0; u < table.users.size(); ++u) {
    Row row;
    row.cells.push_back(table.users[u]);
    std::vector<double> ok;
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = c < table.seconds[u].size() ? table.seconds[u][c]
                                                   : std::numeric_limits<double>::quiet_NaN();
      if (std::isfinite(v)) {
        row.cells.push_back(fixed4(v));
        ok.push_back(v);
        cells.push_back(v);
      } else {
        row.cells.push_back("FAIL");
        cells.push_back(nullptr);
      }
    }
    row.cells.push_back(ok.empty() ? "" : fixed4(mean_of(ok)));
    row.cells.push_back(ok.empty() ? "" : fixed4(std_of(ok)));
    j["rows"].push_back({{"user", table.users[u]}, {"seconds", cells},
                         {"mean", ok.empty() ? nlohmann::json() : nlohmann::json(mean_of(ok))},
                         {"std", ok.empty() ? nlohmann::json() : nlohmann::json(std_of(ok))}});
    rows.push_back(std::move(row));
  }
  std::ostringstream os;
  switch (format) {
    case ReportFormat::Csv: csv_table(os, header, rows); break;
    case ReportFormat::Markdown:
      if (!table.title.empty()) os << "## " << table.title << "\n\n";
      md_table(os, header, rows);
      break;
    case ReportFormat::Json: os << j.dump(2) << '\n'; break;
  }
  return os.str();
}

TimeTable time_table_from_json(const nlohmann::json& j) {
  TimeTable t;
  try {
    t.title = j.value("title", std::string{});
    for (const auto& row : j.at("rows")) {
      t.users.push_back(row.at("user").get<std::string>());
      std::vector<double> secs;
      for (const auto& v : row.at("seconds")) {
        secs.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
      }
      t.seconds.push_back(std::move(secs));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed time table: ") + e.what());
  }
  return t;
}

std::string trial_to_csv(const TrialResult& r) {
  std::ostringstream os;
  os.precision(17);
  const bool pos = !r.position.empty();
  os << "t,reference,actual";
  if (pos) os << ",px,py,pz,cx,cy,cz";
  os << '\n';
  for (std::size_t i = 0; i < r.t.size(); ++i) {
    os << r.t[i] << ',' << r.reference[i] << ',' << r.actual[i];
    if (pos) {
      const auto& p = r.position[i];
      const auto& c = r.target_position[i];
      os << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << c.x() << ',' << c.y() << ','
         << c.z();
    }
    os << '\n';
  }
  return os.str();
}

void write_results(std::span<const TrialResult> results, const std::filesystem::path& dir) {
  std::map<std::string, std::vector<TrialResult>> by_exp;
  for (const auto& r : results) by_exp[r.experiment].push_back(r);
  for (const auto& [exp, rs] : by_exp) {
    const auto sub = dir / exp;
    std::filesystem::create_directories(sub);
    for (const auto& r : rs) {
      std::ofstream out(sub / (r.label + ".csv"));
      if (!out) throw ValidationError("cannot write " + (sub / (r.label + ".csv")).string());
      out << trial_to_csv(r);
      std::ofstream(sub / (r.label + ".json")) << to_json(r).dump() << '\n';
    }
    std::ofstream(sub / "summary.md") << report(rs, ReportFormat::Markdown);
    std::ofstream(sub / "summary.json") << report(rs, ReportFormat::Json);
  }
}

}  // namespace ikk
