#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ikk/capture.hpp"
#include "ikk/control.hpp"
#include "ikk/errors.hpp"
#include "ikk/experiments.hpp"
#include "ikk/identify.hpp"
#include "ikk/interp.hpp"
#include "ikk/logging.hpp"
#include "ikk/service.hpp"

namespace fs = std::filesystem;
using namespace ikk;

namespace {

/// Raised for bad flag combinations and invalid config files; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

nlohmann::json read_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_text(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(p.string() + ": " + e.what());
  }
}

ExperimentConfig load_config(const std::optional<fs::path>& path) {
  if (!path) return {};
  try {
    return experiment_config_from_json(read_json(*path));
  } catch (const ValidationError& e) {
    throw UsageError(path->string() + ": " + e.what());
  }
}

ArmModel load_arm(const std::optional<fs::path>& path) {
  return path ? load_arm_model(*path) : ArmModel::default_arm();
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  bool synthetic = false;
  std::uint64_t seed = 42;
  std::optional<fs::path> session;
  std::optional<fs::path> arm;
  std::optional<fs::path> save_session;
  fs::path out = "basis.json";
  IdentifyConfig id;
};

int cmd_calibrate(const CalibrateArgs& a) {
  if (a.synthetic == a.session.has_value()) {
    throw UsageError("give exactly one of --synthetic or --session");
  }
  CalibrationSession session;
  if (a.synthetic) {
    session = synthesize_calibration(load_arm(a.arm), a.seed);
    if (a.save_session) save_session(session, *a.save_session);
  } else {
    session = load_session(*a.session, a.arm ? std::optional(load_arm_model(*a.arm)) : std::nullopt);
  }
  const auto bases = identify_session(session, a.id);
  save_bases(bases, a.out, a.id);
  std::cout << fmt::format("{:<8} {:>6} {:>8} {:>8} {:>10}\n", "node", "mode", "evr1", "evr2", "span");
  for (const auto& b : bases) {
    const double e1 = b.explained_variance_ratio.size() > 0 ? b.explained_variance_ratio[0] : 0.0;
    const double e2 = b.explained_variance_ratio.size() > 1 ? b.explained_variance_ratio[1] : 0.0;
    std::cout << fmt::format("{:<8} {:>6} {:>8.4f} {:>8.4f} {:>10.4f}\n", b.label, to_string(b.mode),
                             e1, e2, b.span());
  }
  return 0;
}

int cmd_build(const fs::path& basis, const fs::path& out) {
  const auto volume = build_volume(load_bases(basis));
  save_volume(volume, out);
  std::cout << fmt::format("{} nodes, {} tetrahedra, {} hull facets\n", volume.nodes.size(),
                           volume.tetrahedra().size(), volume.triangulation.hull.size());
  return 0;
}

struct RunArgs {
  fs::path volume;
  fs::path input;
  std::optional<fs::path> out;
  ControlConfig control;
  std::string clamp = "saturate";
  bool raw = false;
};

int cmd_run(RunArgs a) {
  a.control.clamp = a.clamp == "hold" ? ClampPolicy::Hold : ClampPolicy::Saturate;
  validate(a.control);
  const auto volume = load_volume(a.volume);
  const auto rec = load_recording(a.input);
  ControlStream stream(a.control);
  std::string csv = "t,raw,value,inside_hull\n";
  std::size_t outside = 0;
  for (const auto& f : rec.frames) {
    auto s = control_signal(volume, f, a.control);
    if (!a.raw) s = stream.push(s);
    if (!s.inside_hull) ++outside;
    csv += fmt::format("{},{},{},{}\n", s.t, s.raw, s.value, s.inside_hull ? "true" : "false");
  }
  if (outside > 0) {
    std::cerr << fmt::format("warning: {} of {} frames lie outside the calibrated hull\n", outside,
                             rec.frames.size());
  }
  if (a.out) {
    write_text(*a.out, csv);
  } else {
    std::cout << csv;
  }
  return 0;
}

struct SimulateArgs {
  std::string experiment;
  fs::path volume;
  std::optional<fs::path> config;
  std::optional<fs::path> arm;
  std::optional<std::uint64_t> seed;
  std::optional<int> repetitions;
  std::string controller = "ikk";
  std::string mode = "both";
  fs::path out = "results";
  std::string format = "markdown";
};

int cmd_simulate(const SimulateArgs& a) {
  auto cfg = load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.repetitions) cfg.repetitions = *a.repetitions;
  const auto fmt_kind = parse_report_format(a.format);
  const auto model = load_arm(a.arm);
  const auto volume = std::make_shared<const InterpolationVolume>(load_volume(a.volume));
  std::vector<TrialResult> results;
  if (a.experiment == "exp1") {
    const auto kind = a.controller == "direct" ? ControllerKind::Direct : ControllerKind::IKK;
    results = run_experiment1(model, volume, cfg, kind);
  } else {
    const auto schedule = make_sphere_schedule(*volume, cfg.seed, cfg.radius_map);
    for (auto m : {SphereMode::Single, SphereMode::Parallel}) {
      if (a.mode == "single" && m != SphereMode::Single) continue;
      if (a.mode == "parallel" && m != SphereMode::Parallel) continue;
      auto rs = run_experiment2(model, volume, cfg, schedule, m);
      results.insert(results.end(), rs.begin(), rs.end());
    }
  }
  write_results(results, a.out);
  std::cout << report(results, fmt_kind);
  return 0;
}

std::vector<double> parse_counts(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--counts: not a number: '" + item + "'");
    }
  }
  return out;
}

int cmd_fit(const std::string& counts, const FitOptions& opts) {
  const auto y = parse_counts(counts);
  const auto fit = fit_learning_curve(y, opts);
  std::cout << to_json(fit).dump(2) << '\n';
  return 0;
}

std::vector<TrialResult> collect_trials(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> files;
  for (const auto& p : inputs) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".json" &&
            e.path().filename() != "summary.json") {
          files.push_back(e.path());
        }
      }
    } else {
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<TrialResult> out;
  for (const auto& f : files) out.push_back(trial_result_from_json(read_json(f)));
  return out;
}

int cmd_report(const std::vector<fs::path>& inputs, const std::optional<fs::path>& times,
               const std::string& format, const std::optional<fs::path>& out) {
  const auto kind = parse_report_format(format);
  std::string text;
  if (times) {
    text = report(time_table_from_json(read_json(*times)), kind);
  } else {
    if (inputs.empty()) throw UsageError("give result files or directories, or --times");
    const auto trials = collect_trials(inputs);
    if (trials.empty()) throw UsageError("no trial results found");
    text = report(trials, kind);
  }
  if (out) {
    write_text(*out, text);
  } else {
    std::cout << text;
  }
  return 0;
}

struct ServeArgs {
  fs::path volume;
  std::optional<fs::path> config;
  std::optional<fs::path> arm;
  std::optional<fs::path> results;
  std::string address = "127.0.0.1";
  unsigned short port = 8765;
};

int cmd_serve(const ServeArgs& a) {
  const auto cfg = load_config(a.config);
  ServerConfig sc;
  sc.address = a.address;
  sc.port = a.port;
  sc.session.gains = cfg.gains;
  sc.session.control = cfg.control;
  sc.session.align_s = cfg.align_s;
  sc.session.duration_s = cfg.duration_s;
  sc.session.radius_map = cfg.radius_map;
  if (a.results) sc.session.results_dir = *a.results;
  const auto volume = std::make_shared<const InterpolationVolume>(load_volume(a.volume));

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Server server(load_arm(a.arm), volume, sc);
  const auto port = server.listen();
  std::cout << fmt::format("listening on ws://{}:{}\n", a.address, port) << std::flush;
  std::thread io([&] { server.run(); });
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  io.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit kinematic kernel pipeline: calibrate, build, run, simulate, fit, report, serve"};
  app.require_subcommand(1);
  app.footer("Log verbosity: IKK_LOG=trace|debug|info|warn|error|off (default warn).\n"
             "Exit codes: 0 success, 1 runtime failure, 2 usage error.");

  CalibrateArgs cal;
  auto* c_cal = app.add_subcommand("calibrate", "Identify per-node signal bases from a calibration session");
  c_cal->add_flag("--synthetic", cal.synthetic, "Simulate the calibration session with the built-in user");
  c_cal->add_option("--seed", cal.seed, "Seed for --synthetic")->capture_default_str();
  c_cal->add_option("--session", cal.session, "Session manifest (session.json)")->check(CLI::ExistingFile);
  c_cal->add_option("--arm", cal.arm, "Arm model JSON (default: built-in 7-DoF arm)")->check(CLI::ExistingFile);
  c_cal->add_option("--save-session", cal.save_session, "Also write the synthetic session to this directory");
  c_cal->add_option("-o,--out", cal.out, "Output basis file")->capture_default_str();
  c_cal->add_option("--variance-threshold", cal.id.variance_threshold,
                    "Explained-variance share for a single component [0-1]")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  c_cal->add_option("--neighborhood-radius", cal.id.neighborhood_radius, "Frame selection radius around each cluster centre [m]")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_cal->add_option("--v-lin-max", cal.id.steady.v_lin_max, "Steady-hand linear speed bound [m/s]")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_cal->add_option("--v-ang-max", cal.id.steady.v_ang_max, "Steady-hand angular speed bound [rad/s]")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_cal->add_flag("!--keep-modes", cal.id.unify_modes, "Do not promote all nodes to two components when one needs it");

  fs::path build_basis, build_out = "volume.json";
  auto* c_build = app.add_subcommand("build", "Triangulate node positions into an interpolation volume");
  c_build->add_option("--basis", build_basis, "Basis file")->required()->check(CLI::ExistingFile);
  c_build->add_option("-o,--out", build_out, "Output volume file")->capture_default_str();

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "Convert a joint recording into a control signal CSV (t,raw,value,inside_hull)");
  c_run->add_option("--volume,--basis", run.volume, "Volume or basis file")->required()->check(CLI::ExistingFile);
  c_run->add_option("--input", run.input, "Recording (.csv or .json)")->required()->check(CLI::ExistingFile);
  c_run->add_option("-o,--out", run.out, "Output CSV (default: stdout)");
  c_run->add_option("--time-constant", run.control.time_constant, "Low-pass time constant [s]; 0 disables")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_run->add_option("--max-slew", run.control.max_slew, "Slew limit [units/s on the 0-100 scale]")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_run->add_option("--clamp", run.clamp, "Out-of-range policy")
      ->check(CLI::IsMember({"saturate", "hold"}))
      ->capture_default_str();
  c_run->add_flag("--invert", run.control.invert, "Reverse the 0-100 mapping");
  c_run->add_flag("--raw", run.raw, "Skip low-pass and slew filtering");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Run an experiment with the simulated user");
  c_sim->add_option("experiment", sim.experiment, "exp1 or exp2")->required()->check(CLI::IsMember({"exp1", "exp2"}));
  c_sim->add_option("--volume,--basis", sim.volume, "Volume or basis file")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--config", sim.config, "Experiment config JSON (flags override it)")->check(CLI::ExistingFile);
  c_sim->add_option("--arm", sim.arm, "Arm model JSON")->check(CLI::ExistingFile);
  c_sim->add_option("--seed", sim.seed, "Master seed");
  c_sim->add_option("--repetitions", sim.repetitions, "Repetitions per trajectory (exp1)")->check(CLI::PositiveNumber);
  c_sim->add_option("--controller", sim.controller, "exp1 controller")
      ->check(CLI::IsMember({"ikk", "direct"}))
      ->capture_default_str();
  c_sim->add_option("--mode", sim.mode, "exp2 sphere mode")
      ->check(CLI::IsMember({"single", "parallel", "both"}))
      ->capture_default_str();
  c_sim->add_option("-o,--out", sim.out, "Results directory")->capture_default_str();
  c_sim->add_option("--format", sim.format, "Summary printed to stdout")
      ->check(CLI::IsMember({"csv", "json", "markdown"}))
      ->capture_default_str();

  std::string counts;
  FitOptions fit;
  auto* c_fit = app.add_subcommand("fit", "Fit the learning curve to per-trial counts; prints JSON");
  c_fit->add_option("--counts", counts, "Comma-separated observations for trials 1..T")->required();
  c_fit->add_option("--restarts", fit.restarts, "Nelder-Mead restarts")->check(CLI::PositiveNumber)->capture_default_str();
  c_fit->add_option("--seed", fit.seed, "Restart seed")->capture_default_str();
  c_fit->add_option("--x-min", fit.x_min, "Curve floor (default: min of the counts)");

  std::vector<fs::path> rep_inputs;
  std::optional<fs::path> rep_times, rep_out;
  std::string rep_format = "markdown";
  auto* c_rep = app.add_subcommand("report", "Summarize trial results or a completion-time table");
  c_rep->add_option("inputs", rep_inputs, "Trial JSON files or result directories")->check(CLI::ExistingPath);
  c_rep->add_option("--times", rep_times, "Completion-time table JSON [s]")->check(CLI::ExistingFile);
  c_rep->add_option("--format", rep_format, "Output format")
      ->check(CLI::IsMember({"csv", "json", "markdown"}))
      ->capture_default_str();
  c_rep->add_option("-o,--out", rep_out, "Output file (default: stdout)");

  ServeArgs srv;
  auto* c_srv = app.add_subcommand("serve", "Host live sessions over WebSocket");
  c_srv->add_option("--volume,--basis", srv.volume, "Volume or basis file")->required()->check(CLI::ExistingFile);
  c_srv->add_option("--config", srv.config, "Experiment config JSON (gains, control, timing)")->check(CLI::ExistingFile);
  c_srv->add_option("--arm", srv.arm, "Arm model JSON")->check(CLI::ExistingFile);
  c_srv->add_option("--results", srv.results, "Directory for finished trials");
  c_srv->add_option("--address", srv.address, "Bind address")->capture_default_str();
  c_srv->add_option("--port", srv.port, "TCP port; 0 picks a free one")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_cal) return cmd_calibrate(cal);
    if (*c_build) return cmd_build(build_basis, build_out);
    if (*c_run) return cmd_run(run);
    if (*c_sim) return cmd_simulate(sim);
    if (*c_fit) return cmd_fit(counts, fit);
    if (*c_rep) return cmd_report(rep_inputs, rep_times, rep_format, rep_out);
    if (*c_srv) return cmd_serve(srv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
