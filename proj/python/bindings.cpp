#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "safetune/experiment.hpp"
#include "safetune/gp.hpp"
#include "safetune/plant.hpp"

namespace py = pybind11;
using namespace safetune;

namespace {

py::array_t<double> as_array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

Point as_point(const std::vector<double>& v) {
    if (v.size() != kDims) throw py::value_error("controller point needs Kp, Kv, Ti");
    return {v[0], v[1], v[2]};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "safe controller tuning core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);

    py::class_<EpisodeMetrics>(m, "EpisodeMetrics")
        .def_readonly("f", &EpisodeMetrics::f)
        .def_readonly("q1", &EpisodeMetrics::q1)
        .def_readonly("q2", &EpisodeMetrics::q2)
        .def_readonly("tau_m", &EpisodeMetrics::tau_m)
        .def_readonly("tau_b", &EpisodeMetrics::tau_b)
        .def("__repr__", [](const EpisodeMetrics& e) {
            std::ostringstream os;
            os << "EpisodeMetrics(f=" << e.f << ", q1=" << e.q1 << ", q2=" << e.q2 << ")";
            return os.str();
        });

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def_readwrite("scenario_name", &ExperimentConfig::scenario_name)
        .def_readwrite("method", &ExperimentConfig::method)
        .def_readwrite("budget", &ExperimentConfig::budget)
        .def_readwrite("seeds", &ExperimentConfig::seeds)
        .def_readwrite("task_model", &ExperimentConfig::task_model)
        .def_readwrite("kappa", &ExperimentConfig::kappa)
        .def_readwrite("eps_tol", &ExperimentConfig::eps_tol)
        .def_readwrite("calibration_episodes", &ExperimentConfig::calibration_episodes)
        .def_property(
            "seed_controller", [](const ExperimentConfig& c) { return std::vector<double>(c.seed_controller.begin(), c.seed_controller.end()); },
            [](ExperimentConfig& c, const std::vector<double>& v) { c.seed_controller = as_point(v); })
        .def("validate", &ExperimentConfig::validate);

    py::class_<Calibration>(m, "Calibration")
        .def_readonly("kappa", &Calibration::kappa)
        .def_readonly("noise_variance_f", &Calibration::noise_variance_f)
        .def_readonly("noise_variance_q1", &Calibration::noise_variance_q1)
        .def_readonly("noise_variance_q2", &Calibration::noise_variance_q2)
        .def_readonly("episodes", &Calibration::episodes)
        .def_readonly("seed_mean", &Calibration::seed_mean);

    py::class_<RunLog>(m, "RunLog")
        .def_readonly("method", &RunLog::method)
        .def_readonly("scenario", &RunLog::scenario)
        .def_readonly("seed", &RunLog::seed)
        .def_readonly("kappa", &RunLog::kappa)
        .def_property_readonly("iterations", [](const RunLog& l) { return l.rows.size(); })
        .def("violations", &RunLog::violations)
        .def("stop_count", &RunLog::stop_count)
        .def("best_feasible_f", &RunLog::best_feasible_f)
        .def("to_csv",
             [](const RunLog& l) {
                 std::ostringstream os;
                 write_iterations_csv(os, l);
                 return os.str();
             })
        .def("summary_json", [](const RunLog& l) { return summarize(l).dump(); });

    m.def("load_config", &load_config, py::arg("path"));
    m.def("calibrate", &calibrate, py::arg("config"), py::call_guard<py::gil_scoped_release>());
    m.def("apply_calibration", &apply_calibration, py::arg("config"), py::arg("calibration"));
    m.def("run", &run_method, py::arg("config"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());

    m.def(
        "simulate",
        [](const std::vector<double>& x, const ExperimentConfig& cfg, std::uint64_t seed, std::size_t iteration) {
            const PlantConfig plant = apply_scenario(cfg.plant, cfg.scenario, iteration);
            const TrajectoryRecord tr = simulate(as_point(x), plant, make_reference(cfg.reference, plant), seed);
            py::dict d;
            d["p"] = as_array(tr.p);
            d["v"] = as_array(tr.v);
            d["p_ref"] = as_array(tr.p_ref);
            d["v_ref"] = as_array(tr.v_ref);
            d["torque_cmd"] = as_array(tr.torque_cmd);
            d["torque_applied"] = as_array(tr.torque_applied);
            d["dt"] = tr.dt;
            d["aborted"] = tr.aborted;
            d["metrics"] = evaluate_episode(tr, cfg.metrics);
            return d;
        },
        py::arg("x"), py::arg("config"), py::arg("seed"), py::arg("iteration") = 0,
        "One closed-loop episode; the scenario is evaluated at `iteration`.");

    m.def(
        "zoh_step",
        [](double p, double v, double torque, double mass, double damping, double dt) {
            const PlantState s = zoh_step({p, v}, torque, mass, damping, dt);
            return py::make_tuple(s.p, s.v);
        },
        py::arg("p"), py::arg("v"), py::arg("torque"), py::arg("m"), py::arg("b"), py::arg("dt"));

    py::enum_<KernelMode>(m, "KernelMode")
        .value("se_ard", KernelMode::se_ard)
        .value("multitask_product", KernelMode::multitask_product)
        .value("multitask_temporal", KernelMode::multitask_temporal);

    py::class_<KernelConfig>(m, "KernelConfig")
        .def(py::init<>())
        .def_property(
            "lengthscales", [](const KernelConfig& k) { return std::vector<double>(k.lengthscales.begin(), k.lengthscales.end()); },
            [](KernelConfig& k, const std::vector<double>& v) { k.lengthscales = as_point(v); })
        .def_readwrite("task_lengthscale", &KernelConfig::task_lengthscale)
        .def_readwrite("signal_variance", &KernelConfig::signal_variance)
        .def_readwrite("temporal_epsilon", &KernelConfig::temporal_epsilon)
        .def_readwrite("mode", &KernelConfig::mode);

    py::class_<GaussianProcess>(m, "GaussianProcess")
        .def(py::init<KernelConfig, double, double>(), py::arg("kernel"), py::arg("noise_variance"),
             py::arg("prior_mean") = 0.0)
        .def(
            "add_observation",
            [](GaussianProcess& gp, const std::vector<double>& x, double task, double y) {
                gp.add_observation({as_point(x), task}, y);
            },
            py::arg("x"), py::arg("task"), py::arg("y"))
        .def(
            "posterior",
            [](const GaussianProcess& gp, const std::vector<double>& x, double task) {
                const Posterior p = gp.posterior({as_point(x), task});
                return py::make_tuple(p.mean, p.variance);
            },
            py::arg("x"), py::arg("task") = 0.0)
        .def(
            "gradient_mean",
            [](const GaussianProcess& gp, const std::vector<double>& x, double task) {
                const Point g = gp.gradient_mean({as_point(x), task});
                return std::vector<double>(g.begin(), g.end());
            },
            py::arg("x"), py::arg("task") = 0.0)
        .def("__len__", &GaussianProcess::size);
}
