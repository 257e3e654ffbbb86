#include <memory>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ikk/capture.hpp"
#include "ikk/control.hpp"
#include "ikk/errors.hpp"
#include "ikk/experiments.hpp"
#include "ikk/identify.hpp"
#include "ikk/interp.hpp"
#include "ikk/simuser.hpp"

namespace py = pybind11;
using namespace ikk;

namespace {

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

using VolumePtr = std::shared_ptr<InterpolationVolume>;

py::list trials_to_py(const std::vector<TrialResult>& rs) {
  py::list out;
  for (const auto& r : rs) out.append(to_py(to_json(r)));
  return out;
}

ExperimentConfig config_from(const py::object& cfg) {
  return cfg.is_none() ? ExperimentConfig{} : experiment_config_from_json(from_py(cfg));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Implicit kinematic kernel core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ContractViolation>(m, "ContractViolation", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ConstructionError>(m, "ConstructionError", base.ptr());
  py::register_exception<InsufficientData>(m, "InsufficientData", base.ptr());
  py::register_exception<UnreachableTarget>(m, "UnreachableTarget", base.ptr());
  py::register_exception<FitFailure>(m, "FitFailure", base.ptr());

  py::class_<ArmModel>(m, "ArmModel")
      .def_static("default_arm", &ArmModel::default_arm)
      .def_static("from_json", [](const py::object& o) { return arm_model_from_json(from_py(o)); })
      .def("to_json", [](const ArmModel& a) { return to_py(to_json(a)); })
      .def_property_readonly("dof", &ArmModel::dof)
      .def_property_readonly("task_dim", &ArmModel::task_dim)
      .def("lower_limits", &ArmModel::lower_limits)
      .def("upper_limits", &ArmModel::upper_limits)
      .def("with_task_dim", &ArmModel::with_task_dim, py::arg("r"));

  m.def(
      "forward_kinematics",
      [](const ArmModel& a, const JointVector& q) {
        const auto p = forward_kinematics(a, q);
        const Eigen::Vector4d o(p.orientation.w(), p.orientation.x(), p.orientation.y(),
                                p.orientation.z());
        return py::make_tuple(Vec3(p.position), o);
      },
      py::arg("model"), py::arg("q"), "Hand position and (w, x, y, z) orientation.");
  m.def(
      "jacobian", [](const ArmModel& a, const JointVector& q) { return jacobian(a, q).entries; },
      py::arg("model"), py::arg("q"));
  m.def("null_space_basis", py::overload_cast<const MatX&, double>(&null_space_basis), py::arg("J"),
        py::arg("tol") = 1e-9);
  m.def("nominal_configuration", &nominal_configuration, py::arg("model"));

  py::class_<PrincipalBasis>(m, "PrincipalBasis")
      .def_readonly("mean", &PrincipalBasis::mean)
      .def_readonly("components", &PrincipalBasis::components)
      .def_readonly("eigenvalues", &PrincipalBasis::eigenvalues)
      .def_readonly("explained_variance_ratio", &PrincipalBasis::explained_variance_ratio);
  m.def("pca", py::overload_cast<const MatX&>(&pca), py::arg("samples"));

  py::class_<SignalBasis>(m, "SignalBasis")
      .def_readonly("label", &SignalBasis::label)
      .def_readonly("node_position", &SignalBasis::node_position)
      .def_property_readonly("mode", [](const SignalBasis& b) { return to_string(b.mode); })
      .def_readonly("mean", &SignalBasis::mean)
      .def_readonly("directions", &SignalBasis::directions)
      .def_readonly("range_min", &SignalBasis::range_min)
      .def_readonly("range_max", &SignalBasis::range_max)
      .def_readonly("explained_variance_ratio", &SignalBasis::explained_variance_ratio)
      .def("to_json", [](const SignalBasis& b) { return to_py(to_json(b)); });

  py::class_<CalibrationSession>(m, "CalibrationSession")
      .def_property_readonly("labels",
                             [](const CalibrationSession& s) {
                               std::vector<std::string> out;
                               for (const auto& p : s.points) out.push_back(p.label);
                               return out;
                             })
      .def_property_readonly("model", [](const CalibrationSession& s) { return s.model; })
      .def("save", &save_session, py::arg("directory"))
      .def("__len__", [](const CalibrationSession& s) { return s.points.size(); });

  m.def(
      "synthesize_calibration",
      [](std::uint64_t seed, std::size_t n_points, const std::optional<ArmModel>& model) {
        SynthesisConfig cfg;
        cfg.n_points = n_points;
        return synthesize_calibration(model ? *model : ArmModel::default_arm(), seed, cfg);
      },
      py::arg("seed") = 42, py::arg("n_points") = 10, py::arg("model") = py::none());
  m.def(
      "load_session", [](const std::filesystem::path& p) { return load_session(p); },
      py::arg("manifest"));
  m.def(
      "identify_session",
      [](const CalibrationSession& s, double threshold) {
        IdentifyConfig cfg;
        cfg.variance_threshold = threshold;
        return identify_session(s, cfg);
      },
      py::arg("session"), py::arg("variance_threshold") = 0.80);
  m.def(
      "save_bases",
      [](const std::vector<SignalBasis>& b, const std::filesystem::path& p) { save_bases(b, p); },
      py::arg("bases"), py::arg("path"));
  m.def("load_bases", &load_bases, py::arg("path"));

  py::class_<InterpolationVolume, VolumePtr>(m, "InterpolationVolume")
      .def_property_readonly("nodes", [](const InterpolationVolume& v) { return v.nodes; })
      .def_property_readonly("tetrahedra", [](const InterpolationVolume& v) { return v.tetrahedra(); })
      .def_property_readonly("hull", [](const InterpolationVolume& v) { return v.triangulation.hull; })
      .def_property_readonly("mode", [](const InterpolationVolume& v) { return to_string(v.mode); })
      .def_property_readonly("dof", &InterpolationVolume::dof)
      .def("inside_hull", [](const InterpolationVolume& v, const Vec3& x) { return strictly_inside_hull(v, x); })
      .def("save", [](const InterpolationVolume& v, const std::filesystem::path& p) { save_volume(v, p); })
      .def("to_json", [](const InterpolationVolume& v) { return to_py(to_json(v)); });

  m.def(
      "build_volume", [](std::vector<SignalBasis> b) { return std::make_shared<InterpolationVolume>(build_volume(std::move(b))); },
      py::arg("bases"));
  m.def(
      "load_volume", [](const std::filesystem::path& p) { return std::make_shared<InterpolationVolume>(load_volume(p)); },
      py::arg("path"));

  m.def(
      "sibson_weights",
      [](const VolumePtr& v, const Vec3& x) {
        const auto r = sibson_weights(*v, x);
        py::dict d;
        d["inside_hull"] = r.inside_hull;
        d["weights"] = r.weights;
        d["stolen_volumes"] = r.stolen_volumes;
        d["cell_volume"] = r.cell_volume;
        return d;
      },
      py::arg("volume"), py::arg("position"));

  py::class_<InterpolatedBasis>(m, "InterpolatedBasis")
      .def_property_readonly("mode", [](const InterpolatedBasis& b) { return to_string(b.mode); })
      .def_readonly("mean", &InterpolatedBasis::mean)
      .def_readonly("directions", &InterpolatedBasis::directions)
      .def_readonly("range_min", &InterpolatedBasis::range_min)
      .def_readonly("range_max", &InterpolatedBasis::range_max)
      .def_readonly("weights", &InterpolatedBasis::weights)
      .def_readonly("inside_hull", &InterpolatedBasis::inside_hull);
  m.def(
      "interpolate_basis", [](const VolumePtr& v, const Vec3& x) { return interpolate_basis(*v, x); },
      py::arg("volume"), py::arg("position"));

  m.def(
      "control_signal",
      [](const VolumePtr& v, const JointVector& q, const Vec3& hand, double t) {
        Frame f;
        f.t = t;
        f.q = q;
        f.hand.position = hand;
        const auto s = control_signal(*v, f);
        py::dict d;
        d["t"] = s.t;
        d["raw"] = s.raw;
        d["value"] = s.value;
        d["unclamped"] = s.unclamped;
        d["inside_hull"] = s.inside_hull;
        return d;
      },
      py::arg("volume"), py::arg("q"), py::arg("hand_position"), py::arg("t") = 0.0,
      "Unfiltered control value of one frame.");

  m.def(
      "generate_profile",
      [](std::uint64_t seed, double duration) { return generate_profile(seed, duration).values; },
      py::arg("seed"), py::arg("duration_s") = 25.0, "Reference samples at 100 Hz.");
  m.def(
      "rmse", [](const std::vector<double>& a, const std::vector<double>& b) { return rmse(a, b); },
      py::arg("actual"), py::arg("target"));

  m.def(
      "run_experiment1",
      [](const VolumePtr& v, const py::object& cfg, const std::string& controller) {
        const auto kind = controller == "direct" ? ControllerKind::Direct : ControllerKind::IKK;
        return trials_to_py(run_experiment1(ArmModel::default_arm(), v, config_from(cfg), kind));
      },
      py::arg("volume"), py::arg("config") = py::none(), py::arg("controller") = "IKK");
  m.def(
      "run_experiment2",
      [](const VolumePtr& v, const py::object& cfg, const std::string& mode) {
        const auto c = config_from(cfg);
        const auto schedule = make_sphere_schedule(*v, c.seed, c.radius_map);
        const auto sm = mode == "parallel" ? SphereMode::Parallel : SphereMode::Single;
        return trials_to_py(run_experiment2(ArmModel::default_arm(), v, c, schedule, sm));
      },
      py::arg("volume"), py::arg("config") = py::none(), py::arg("mode") = "single");

  m.def(
      "fit_learning_curve",
      [](const std::vector<double>& y, int restarts, std::uint64_t seed, std::optional<double> x_min) {
        FitOptions opts;
        opts.restarts = restarts;
        opts.seed = seed;
        opts.x_min = x_min;
        return to_py(to_json(fit_learning_curve(y, opts)));
      },
      py::arg("y"), py::arg("restarts") = 200, py::arg("seed") = 1, py::arg("x_min") = py::none());

  m.def(
      "report",
      [](const py::list& trials, const std::string& format) {
        std::vector<TrialResult> rs;
        for (const auto& t : trials) rs.push_back(trial_result_from_json(from_py(py::reinterpret_borrow<py::object>(t))));
        return report(rs, parse_report_format(format));
      },
      py::arg("trials"), py::arg("format") = "markdown");
}
