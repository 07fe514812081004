#include "medlab/config.hpp"
#include "medlab/ensemble.hpp"
#include "medlab/errors.hpp"
#include "medlab/exit_time.hpp"
#include "medlab/experiments.hpp"
#include "medlab/io.hpp"
#include "medlab/landscape.hpp"
#include "medlab/moments.hpp"
#include "medlab/ode.hpp"
#include "medlab/sde.hpp"
#include "medlab/sgd.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace medlab;

namespace {

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::array_t<double> column_m(const Trajectory& t) {
    const int p = t.empty() ? 0 : t.front().state.width();
    py::array_t<double> out({static_cast<py::ssize_t>(t.size()), static_cast<py::ssize_t>(p)});
    auto v = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < t.size(); ++i)
        for (int j = 0; j < p; ++j) v(i, j) = t.points()[i].state.m(j);
    return out;
}

py::array_t<double> column_a(const Trajectory& t) {
    const int p = t.empty() ? 0 : t.front().state.width();
    py::array_t<double> out({static_cast<py::ssize_t>(t.size()), static_cast<py::ssize_t>(p)});
    auto v = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < t.size(); ++i)
        for (int j = 0; j < p; ++j) v(i, j) = t.points()[i].state.a(j);
    return out;
}

py::array_t<double> column_Q(const Trajectory& t) {
    const int p = t.empty() ? 0 : t.front().state.width();
    py::array_t<double> out({static_cast<py::ssize_t>(t.size()), static_cast<py::ssize_t>(p), static_cast<py::ssize_t>(p)});
    auto v = out.mutable_unchecked<3>();
    for (std::size_t i = 0; i < t.size(); ++i)
        for (int j = 0; j < p; ++j)
            for (int l = 0; l < p; ++l) v(i, j, l) = t.points()[i].state.Q(j, l);
    return out;
}

ExperimentConfig config_from(const std::string& kind, const std::map<std::string, std::string>& overrides) {
    ExperimentConfig c = default_config(parse_experiment_kind(kind));
    for (const auto& [k, v] : overrides) set_field(c, k, v);
    return c;
}

}  // namespace

PYBIND11_MODULE(_medlab, m) {
    m.doc() = "Escape-time experiments for one-pass SGD on phase retrieval";
    m.attr("__version__") = version();

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base);
    py::register_exception<UnsupportedOrderError>(m, "UnsupportedOrderError", base);
    py::register_exception<InvalidStateError>(m, "InvalidStateError", base);
    py::register_exception<UnsupportedConfigError>(m, "UnsupportedConfigError", base);
    py::register_exception<SizeError>(m, "SizeError", base);
    py::register_exception<IllConditionedInitError>(m, "IllConditionedInitError", base);
    py::register_exception<IntegrationBlowupError>(m, "IntegrationBlowupError", base);
    py::register_exception<StepRejectedError>(m, "StepRejectedError", base);
    py::register_exception<DivergenceError>(m, "DivergenceError", base);
    py::register_exception<NoCrossingError>(m, "NoCrossingError", base);
    py::register_exception<UnstableRateError>(m, "UnstableRateError", base);
    py::register_exception<DegenerateDiffusionError>(m, "DegenerateDiffusionError", base);
    py::register_exception<PrecisionError>(m, "PrecisionError", base);

    py::class_<TaskParams>(m, "TaskParams")
        .def(py::init([](std::int64_t d, int p, double gamma, double delta, bool spherical, bool train_a) {
                 TaskParams t;
                 t.d = d;
                 t.p = p;
                 t.gamma = gamma;
                 t.delta = delta;
                 t.spherical = spherical;
                 t.train_a = train_a;
                 return t;
             }),
             py::arg("d") = 1000, py::arg("p") = 1, py::arg("gamma") = 0.1, py::arg("delta") = 0.0,
             py::arg("spherical") = true, py::arg("train_a") = false)
        .def_readwrite("d", &TaskParams::d)
        .def_readwrite("p", &TaskParams::p)
        .def_readwrite("gamma", &TaskParams::gamma)
        .def_readwrite("delta", &TaskParams::delta)
        .def_readwrite("spherical", &TaskParams::spherical)
        .def_readwrite("train_a", &TaskParams::train_a)
        .def("validate", &TaskParams::validate)
        .def("time_per_step", &TaskParams::time_per_step)
        .def("__repr__", [](const TaskParams& t) {
            return "TaskParams(d=" + std::to_string(t.d) + ", p=" + std::to_string(t.p) + ", gamma=" +
                   format_double(t.gamma) + ", delta=" + format_double(t.delta) + ")";
        });

    py::class_<OverlapState>(m, "OverlapState")
        .def(py::init([](const Eigen::VectorXd& mm, const Eigen::MatrixXd& Q, std::optional<Eigen::VectorXd> a, double rho) {
                 OverlapState s;
                 s.m = mm;
                 s.Q = Q;
                 s.a = a ? *a : Eigen::VectorXd::Ones(mm.size());
                 s.rho = rho;
                 return s;
             }),
             py::arg("m"), py::arg("Q"), py::arg("a") = py::none(), py::arg("rho") = 1.0)
        .def_static("orthogonal", &OverlapState::orthogonal, py::arg("p"))
        .def_readwrite("m", &OverlapState::m)
        .def_readwrite("Q", &OverlapState::Q)
        .def_readwrite("a", &OverlapState::a)
        .def_readwrite("rho", &OverlapState::rho)
        .def_property_readonly("width", &OverlapState::width)
        .def("validate", &OverlapState::validate, py::arg("spherical"));

    py::class_<Trajectory>(m, "Trajectory")
        .def("__len__", &Trajectory::size)
        .def_property_readonly("t", [](const Trajectory& t) { return py::array(py::cast(t.times())); })
        .def_property_readonly("risk", [](const Trajectory& t) { return py::array(py::cast(t.risks())); })
        .def_property_readonly("m", &column_m)
        .def_property_readonly("Q", &column_Q)
        .def_property_readonly("a", &column_a)
        .def("state", [](const Trajectory& t, std::size_t i) { return t.points().at(i).state; })
        .def_property_readonly("params", [](const Trajectory& t) { return t.meta().params; })
        .def_property_readonly("scheme", [](const Trajectory& t) { return t.meta().scheme; })
        .def_property_readonly("dt", [](const Trajectory& t) { return t.meta().dt; });

    m.def("population_risk", &population_risk, py::arg("state"), py::arg("delta"));
    m.def("excess_risk", &excess_risk, py::arg("state"), py::arg("delta"));

    m.def(
        "wick_moment",
        [](const std::vector<int>& fields, const Eigen::MatrixXd& omega) { return wick_moment(MonomialIndex(std::span<const int>(fields)), OmegaMatrix(omega)); },
        py::arg("fields"), py::arg("omega"), "Gaussian moment E[prod lambda_i] by pairing enumeration.");

    m.def(
        "diffusion_covariance",
        [](const OverlapState& s, const TaskParams& p, const std::string& noise) {
            return diffusion_covariance(s, p, parse_noise_convention(noise)).Sigma;
        },
        py::arg("state"), py::arg("params"), py::arg("noise") = "sgd");

    m.def(
        "integrate_ode",
        [](const OverlapState& s, const TaskParams& p, double dt, double horizon, const std::string& scheme, std::size_t stride) {
            OdeOptions o;
            o.dt = dt;
            o.horizon = horizon;
            o.scheme = parse_ode_scheme(scheme);
            o.stride = stride;
            return integrate(s, p, o);
        },
        py::arg("initial"), py::arg("params"), py::arg("dt") = 1e-3, py::arg("horizon") = 10.0, py::arg("scheme") = "rk4",
        py::arg("stride") = 0, py::call_guard<py::gil_scoped_release>());

    m.def(
        "integrate_sde",
        [](const OverlapState& s, const TaskParams& p, double dt, double horizon, std::uint64_t seed, std::uint64_t path,
           std::size_t stride, const std::string& noise) {
            SdeOptions o;
            o.dt = dt;
            o.horizon = horizon;
            o.seed = seed;
            o.path = path;
            o.stride = stride;
            o.convention = parse_noise_convention(noise);
            return integrate_sde(s, p, o);
        },
        py::arg("initial"), py::arg("params"), py::arg("dt") = 0.0, py::arg("horizon") = 10.0, py::arg("seed") = 0,
        py::arg("path") = 0, py::arg("stride") = 0, py::arg("noise") = "sgd", py::call_guard<py::gil_scoped_release>());

    m.def(
        "init_overlaps",
        [](std::int64_t d, int p, const std::string& mode, std::uint64_t seed) {
            return init_overlaps(d, p, parse_init_mode(mode), seed);
        },
        py::arg("d"), py::arg("p"), py::arg("mode") = "spherical-uniform", py::arg("seed") = 0);

    m.def(
        "sgd_ensemble",
        [](const TaskParams& p, std::size_t members, std::uint64_t seed, double horizon, std::size_t records,
           const std::string& engine, const std::string& init, double m0, std::optional<int> workers) {
            SgdEnsembleSpec s;
            s.params = p;
            s.members = members;
            s.seed = seed;
            s.n_steps = static_cast<std::size_t>(std::ceil(horizon / p.time_per_step() - 1e-9));
            s.stride = default_stride(s.n_steps, records);
            s.engine = parse_sgd_engine(engine);
            s.init = parse_ensemble_init(init);
            s.m0 = m0;
            s.workers = workers;
            Ensemble e;
            {
                py::gil_scoped_release release;
                e = run_sgd_ensemble(s);
            }
            py::list failures;
            for (const MemberFailure& f : e.failures)
                failures.append(py::dict(py::arg("member") = f.member, py::arg("kind") = f.kind, py::arg("what") = f.what));
            return py::make_tuple(e.runs, failures);
        },
        py::arg("params"), py::arg("members") = 50, py::arg("seed") = 1, py::arg("horizon") = 5.0,
        py::arg("records") = 1000, py::arg("engine") = "overlap-chain", py::arg("init") = "per-member",
        py::arg("m0") = 0.1, py::arg("workers") = py::none(),
        "Runs an SGD ensemble. Returns (trajectories, failures).");

    m.def("exit_time_numeric", &exit_time_numeric, py::arg("trajectory"), py::arg("T"), py::arg("delta"));
    m.def(
        "exit_time",
        [](double T, const TaskParams& p, const std::string& mode, std::size_t mc_samples, std::uint64_t seed) {
            ExitTimeQuery q;
            q.T = T;
            q.params = p;
            q.mode = parse_exit_mode(mode);
            q.mc_samples = mc_samples;
            q.seed = seed;
            const ExitTimeEstimate e = exit_time_general_p(q);
            return py::dict(py::arg("value") = e.value, py::arg("se") = e.se, py::arg("samples") = e.samples,
                            py::arg("rejected") = e.rejected);
        },
        py::arg("T"), py::arg("params"), py::arg("mode") = "annealed", py::arg("mc_samples") = 100000,
        py::arg("seed") = 0);
    m.def("annealed_exit_time_p1", &annealed_exit_time_p1, py::arg("T"), py::arg("d"), py::arg("gamma"), py::arg("delta"));
    m.def("gamma_opt", &gamma_opt, py::arg("p"), py::arg("delta"));
    m.def("steps_to_exit", &steps_to_exit, py::arg("T"), py::arg("params"));
    m.def(
        "min_steps_and_gain",
        [](int p, double d, double delta, double T) {
            const MinStepsAndGain g = min_steps_and_gain(p, d, delta, T);
            return py::make_tuple(g.s_min, g.gain_limit);
        },
        py::arg("p"), py::arg("d"), py::arg("delta"), py::arg("T"));
    m.def(
        "linearized_rates",
        [](const TaskParams& p) {
            const LinearizedRates r = linearized_rates(p);
            return py::dict(py::arg("omega_M") = r.omega_M, py::arg("omega_Q") = r.omega_Q, py::arg("mu") = r.mu,
                            py::arg("sigma2") = r.sigma2);
        },
        py::arg("params"));
    m.def("hyp2f2", &hyp2f2, py::arg("z"), py::arg("tol") = 1e-15);
    m.def("sde_exit_time_p1", &sde_exit_time_p1, py::arg("T"), py::arg("d"), py::arg("gamma"), py::arg("delta"));

    m.def(
        "critical_points",
        [](double rho, double delta) {
            py::list out;
            for (const CriticalPoint& c : classify_critical_points(rho, delta)) out.append(from_json(to_json(c)));
            return out;
        },
        py::arg("rho") = 1.0, py::arg("delta") = 0.0);

    m.def("read_trajectory_csv", py::overload_cast<const std::filesystem::path&>(&read_trajectory_csv), py::arg("path"));
    m.def("write_trajectory_csv",
          py::overload_cast<const std::filesystem::path&, const Trajectory&>(&write_trajectory_csv), py::arg("path"),
          py::arg("trajectory"));

    m.def(
        "run_experiment",
        [](const std::string& kind, const std::map<std::string, std::string>& config) {
            const ExperimentConfig c = config_from(kind, config);
            ExperimentResult r;
            {
                py::gil_scoped_release release;
                r = run_experiment(c);
            }
            return py::dict(py::arg("status") = to_string(r.status), py::arg("exit_code") = exit_code(r.status),
                            py::arg("summary") = from_json(r.summary), py::arg("files") = r.files,
                            py::arg("warnings") = r.warnings);
        },
        py::arg("kind"), py::arg("config") = std::map<std::string, std::string>{},
        "Runs a CLI experiment kind with string config overrides; artifacts go to config['out'].");

    m.def(
        "selftest",
        [](std::uint64_t seed) {
            std::vector<SelftestCheck> checks;
            {
                py::gil_scoped_release release;
                checks = run_selftest(seed, std::nullopt);
            }
            py::list out;
            for (const SelftestCheck& c : checks)
                out.append(py::dict(py::arg("name") = c.name, py::arg("passed") = c.passed, py::arg("detail") = c.detail));
            return out;
        },
        py::arg("seed") = 1);
}
