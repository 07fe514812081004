#include "medlab/experiments.hpp"

#include "medlab/diagnostics.hpp"
#include "medlab/errors.hpp"
#include "medlab/exit_time.hpp"
#include "medlab/io.hpp"
#include "medlab/landscape.hpp"
#include "medlab/moments.hpp"
#include "medlab/parallel.hpp"
#include "medlab/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#ifndef MEDLAB_VERSION
#define MEDLAB_VERSION "0.0.0"
#endif

namespace medlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_)) throw ConfigError("invalid out: cannot create directory " + dir_.string());
    }

    fs::path claim(const std::string& name) {
        files_.push_back(name);
        const fs::path p = dir_ / name;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        return p;
    }

    void trajectory(const std::string& name, const Trajectory& traj) { write_trajectory_csv(claim(name), traj); }
    void series(const std::string& name, const Series& s) { write_series_csv(claim(name), s); }
    void columns(const std::string& name, const std::vector<std::string>& names,
                 const std::vector<std::vector<double>>& cols) {
        write_columns_csv(claim(name), names, cols);
    }
    void text(const std::string& name, const std::string& body) {
        std::ofstream os(claim(name));
        os << body;
        if (!os) throw ConfigError("invalid out: failed writing " + name);
    }
    void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

    const std::vector<std::string>& files() const noexcept { return files_; }

private:
    fs::path dir_;
    std::vector<std::string> files_;
};

json failures_json(const std::vector<MemberFailure>& failures) {
    json a = json::array();
    for (const MemberFailure& f : failures) a.push_back({{"member", f.member}, {"kind", f.kind}, {"what", f.what}});
    return a;
}

json scalar_json(const std::vector<double>& values) {
    if (values.empty()) return {{"mean", nullptr}, {"se", nullptr}, {"sd", nullptr}, {"n", 0}};
    const ScalarStats s = reduce_scalars(values);
    return {{"mean", s.mean}, {"se", s.se}, {"sd", s.sd}, {"n", s.n}};
}

std::size_t steps_for(double horizon, const TaskParams& tp) {
    return static_cast<std::size_t>(std::ceil(horizon / tp.time_per_step() - 1e-9));
}

Series stats_series(const SeriesStats& s, const std::string& y_name) {
    return Series{"t", y_name, s.x, s.mean, s.se};
}

/// Per-member exit times; nullopt where the level is not reached.
std::vector<std::optional<double>> member_exit_times(const Ensemble& ens, double T, double delta) {
    std::vector<std::optional<double>> out;
    for (const Trajectory& tr : ens.runs) {
        try {
            out.push_back(exit_time_numeric(tr, T, delta));
        } catch (const NoCrossingError&) {
            out.push_back(std::nullopt);
        }
    }
    return out;
}

std::vector<double> crossed(const std::vector<std::optional<double>>& v) {
    std::vector<double> out;
    for (const auto& x : v)
        if (x) out.push_back(*x);
    return out;
}

json exit_json(const std::vector<std::optional<double>>& v, double T) {
    json values = json::array();
    for (const auto& x : v) values.push_back(opt_json(x));
    json j = scalar_json(crossed(v));
    j["T"] = T;
    j["values"] = values;
    j["no_crossing"] = v.size() - crossed(v).size();
    return j;
}

std::optional<double> ode_exit(const Trajectory& traj, double T, double delta) {
    try {
        return exit_time_numeric(traj, T, delta);
    } catch (const NoCrossingError&) {
        return std::nullopt;
    }
}

std::size_t window_end(const std::vector<double>& reference, double delta) {
    const double final_excess = reference.back() - 0.5 * delta;
    for (std::size_t i = 0; i < reference.size(); ++i)
        if (reference[i] - 0.5 * delta <= 1.1 * final_excess) return i + 1;
    return reference.size();
}

double time_average(const std::vector<double>& x, const std::vector<double>& y, std::size_t end) {
    double a = 0.0;
    for (std::size_t i = 1; i < end; ++i) a += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    return a / (x[end - 1] - x[0]);
}

SgdEnsembleSpec sgd_spec(const ExperimentConfig& c, const TaskParams& tp, std::size_t members) {
    SgdEnsembleSpec s;
    s.params = tp;
    s.members = members;
    s.seed = c.seed;
    s.n_steps = steps_for(c.horizon, tp);
    s.stride = default_stride(s.n_steps, c.records);
    s.engine = parse_sgd_engine(c.engine);
    s.m0 = c.m0;
    s.second = parse_second_layer_init(c.second_init);
    if (c.workers > 0) s.workers = c.workers;
    if (c.init == "orthogonal") {
        s.initial_state = OverlapState::orthogonal(tp.p);
    } else {
        s.init = parse_ensemble_init(c.init);
    }
    return s;
}

RunStatus merge(RunStatus a, RunStatus b) {
    if (a == RunStatus::diverged || b == RunStatus::diverged) return RunStatus::diverged;
    if (a == RunStatus::no_crossing || b == RunStatus::no_crossing) return RunStatus::no_crossing;
    return RunStatus::ok;
}

void write_members(Artifacts& art, const ExperimentConfig& c, const Ensemble& ens, const std::string& prefix) {
    if (!c.write_members) return;
    for (std::size_t k = 0; k < ens.runs.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "%s/member_%04zu.csv", prefix.c_str(), ens.members[k]);
        art.trajectory(name, ens.runs[k]);
    }
}

Trajectory reference_ode(const ExperimentConfig& c, const OverlapState& init, const TaskParams& tp, double until) {
    OdeOptions o;
    o.dt = c.kind == ExperimentKind::sde ? 1e-3 : c.dt;
    o.horizon = until + o.dt;
    o.scheme = parse_ode_scheme(c.scheme);
    o.stride = 1;
    return integrate(init, tp, o);
}

ExperimentResult run_ode(const ExperimentConfig& c, Artifacts& art) {
    ExperimentResult r;
    const TaskParams tp = task_params(c, c.p);
    const OverlapState init = initial_state(c, tp);
    OdeOptions o;
    o.dt = c.dt;
    o.horizon = c.horizon;
    o.scheme = parse_ode_scheme(c.scheme);
    o.stride = default_stride(static_cast<std::size_t>(std::ceil(c.horizon / c.dt - 1e-9)), c.records);
    Trajectory traj;
    try {
        traj = integrate(init, tp, o);
    } catch (const IntegrationBlowupError& e) {
        r.status = RunStatus::diverged;
        r.failures.push_back({0, "integration-blowup", e.what()});
        r.summary = {{"error", e.what()}};
        return r;
    }
    art.trajectory("trajectory.csv", traj);
    art.series("risk.csv", Series{"t", "risk", traj.times(), traj.risks(), {}});
    art.series("max_m.csv", Series{"t", "max_m", traj.times(), max_correlation_diagnostic(traj), {}});
    const auto t_ext = ode_exit(traj, c.T, c.delta);
    if (!t_ext) r.status = RunStatus::no_crossing;
    const LinearizedRates rates = linearized_rates(tp);
    r.summary = {{"initial_risk", traj.front().risk},
                 {"final_risk", traj.back().risk},
                 {"final_excess_risk", traj.back().risk - 0.5 * c.delta},
                 {"T", c.T},
                 {"t_ext", opt_json(t_ext)},
                 {"omega_M", rates.omega_M},
                 {"omega_Q", rates.omega_Q},
                 {"records", traj.size()}};
    if (c.p == 1 && c.spherical && !c.train_a && 6.0 * tp.gamma < 1.0)
        r.summary["plateau_excess_prediction"] = tp.gamma * c.delta / (1.0 - 6.0 * tp.gamma);
    return r;
}

ExperimentResult run_sgd_kind(const ExperimentConfig& c, Artifacts& art) {
    ExperimentResult r;
    const TaskParams tp = task_params(c, c.p);
    const SgdEnsembleSpec spec = sgd_spec(c, tp, c.members);
    const Ensemble ens = run_sgd_ensemble(spec);
    r.failures = ens.failures;
    if (!ens.failures.empty()) r.status = RunStatus::diverged;
    r.summary["members"] = c.members;
    r.summary["completed"] = ens.runs.size();
    r.summary["diverged"] = failures_json(ens.failures);
    r.summary["n_steps"] = spec.n_steps;
    r.summary["stride"] = spec.stride;
    if (ens.runs.empty()) return r;

    write_members(art, c, ens, "members");
    const SeriesStats rs = risk_stats(ens);
    art.series("risk_mean.csv", stats_series(rs, "risk"));
    art.series("max_m_mean.csv", stats_series(max_correlation_stats(ens), "max_m"));
    const auto t_ext = member_exit_times(ens, c.T, c.delta);
    r.summary["t_ext"] = exit_json(t_ext, c.T);
    if (crossed(t_ext).size() != t_ext.size()) r.status = merge(r.status, RunStatus::no_crossing);

    if (c.compare_ode && (c.init != "per-member")) {
        const OverlapState init = ensemble_initial_state(spec, 0);
        try {
            const Trajectory ode = reference_ode(c, init, tp, rs.x.back());
            const std::vector<double> ref = risk_at(ode, rs.x);
            art.trajectory("ode.csv", ode);
            art.series("risk_ode.csv", Series{"t", "risk", rs.x, ref, {}});
            const BandComparison band = compare_to_reference(rs, ref, c.delta, 3.0);
            r.summary["ode"] = {{"t_ext", opt_json(ode_exit(ode, c.T, c.delta))},
                                {"max_z", band.max_z},
                                {"t_at_max_z", band.t_at_max},
                                {"points", band.points},
                                {"points_over_3se", band.over},
                                {"window_end", band.window_end}};
        } catch (const IntegrationBlowupError& e) {
            r.status = RunStatus::diverged;
            r.summary["ode"] = {{"error", e.what()}};
        }
    }
    return r;
}

ExperimentResult run_sde_kind(const ExperimentConfig& c, Artifacts& art) {
    ExperimentResult r;
    const TaskParams tp = task_params(c, c.p);
    SdeEnsembleSpec spec;
    spec.params = tp;
    spec.initial = initial_state(c, tp);
    spec.members = c.members;
    spec.seed = c.seed;
    spec.options.dt = c.dt;
    spec.options.horizon = c.horizon;
    const double step = c.dt > 0.0 ? c.dt : tp.time_per_step();
    spec.options.stride = default_stride(static_cast<std::size_t>(std::ceil(c.horizon / step - 1e-9)), c.records);
    spec.options.convention = parse_noise_convention(c.noise);
    if (c.workers > 0) spec.workers = c.workers;
    const Ensemble ens = run_sde_ensemble(spec);
    r.failures = ens.failures;
    if (!ens.failures.empty()) r.status = RunStatus::diverged;
    r.summary["members"] = c.members;
    r.summary["completed"] = ens.runs.size();
    r.summary["diverged"] = failures_json(ens.failures);
    r.summary["dt"] = step;
    if (ens.runs.empty()) return r;

    write_members(art, c, ens, "paths");
    const SeriesStats rs = risk_stats(ens);
    art.series("risk_mean.csv", stats_series(rs, "risk"));
    art.series("max_m_mean.csv", stats_series(max_correlation_stats(ens), "max_m"));
    const auto t_ext = member_exit_times(ens, c.T, c.delta);
    r.summary["t_ext"] = exit_json(t_ext, c.T);
    if (crossed(t_ext).size() != t_ext.size()) r.status = merge(r.status, RunStatus::no_crossing);

    if (c.compare_ode) {
        try {
            const Trajectory ode = reference_ode(c, spec.initial, tp, rs.x.back());
            const std::vector<double> ref = risk_at(ode, rs.x);
            art.trajectory("ode.csv", ode);
            art.series("risk_ode.csv", Series{"t", "risk", rs.x, ref, {}});
            const BandComparison band = compare_to_reference(rs, ref, c.delta, 2.0);
            const std::size_t end = window_end(ref, c.delta);
            std::vector<double> averages;
            for (const Trajectory& tr : ens.runs) averages.push_back(time_average(rs.x, tr.risks(), end));
            const ScalarStats avg = reduce_scalars(averages);
            const double ref_avg = time_average(rs.x, ref, end);
            const auto t_ode = ode_exit(ode, c.T, c.delta);
            r.summary["ode"] = {{"t_ext", opt_json(t_ode)},
                                {"time_averaged_risk", ref_avg},
                                {"window_end", band.window_end},
                                {"max_pointwise_z", band.max_z},
                                {"points_over_2se", band.over},
                                {"points", band.points}};
            r.summary["time_averaged_risk"] = {{"mean", avg.mean}, {"se", avg.se}, {"z", (avg.mean - ref_avg) / avg.se}};
        } catch (const IntegrationBlowupError& e) {
            r.status = RunStatus::diverged;
            r.summary["ode"] = {{"error", e.what()}};
        }
    }
    return r;
}

ExperimentResult run_exit_table(const ExperimentConfig& c, Artifacts& art) {
    ExperimentResult r;
    const bool want_anl = c.mode != "quenched";
    const bool want_qnc = c.mode != "annealed";
    std::vector<double> col_p, col_gamma, col_anl, col_qnc, col_qnc_err, col_meas, col_meas_err, col_ra, col_ra_err,
        col_rq, col_rq_err;
    json records = json::array();
    json measured = json::array();
    for (int p : c.p_list) {
        const TaskParams tp = task_params(c, p);
        ExitTimeQuery q;
        q.T = c.T;
        q.params = tp;
        q.mc_samples = c.mc_samples;
        q.seed = c.seed;
        if (c.workers > 0) q.workers = c.workers;
        double anl = kNaN, qnc = kNaN, qnc_se = kNaN;
        auto record = [&](const std::string& mode, double t, std::optional<double> se, const std::string& method,
                          std::vector<std::string> warnings) {
            ExitTimeRecord rec{mode, p, tp.d, tp.gamma, tp.delta, c.T, t, se, method, std::move(warnings)};
            records.push_back(to_json(rec));
        };
        if (want_anl) {
            WarningCapture cap;
            q.mode = ExitMode::annealed;
            anl = exit_time_general_p(q).value;
            record("annealed", anl, std::nullopt, "formula", cap.messages());
        }
        if (want_qnc) {
            WarningCapture cap;
            q.mode = ExitMode::quenched;
            const ExitTimeEstimate e = exit_time_general_p(q);
            qnc = e.value;
            qnc_se = e.se.value_or(0.0);
            record("quenched", qnc, e.se, "formula", cap.messages());
        }
        if (p == 1 && c.T <= 0.1) {
            WarningCapture cap;
            record("sde", sde_exit_time_p1(c.T, tp.d, tp.gamma, tp.delta), std::nullopt, "formula", cap.messages());
        }
        double meas = kNaN, meas_se = kNaN;
        if (c.members > 0) {
            const Ensemble ens = run_sgd_ensemble(sgd_spec(c, tp, c.members));
            r.failures.insert(r.failures.end(), ens.failures.begin(), ens.failures.end());
            if (!ens.failures.empty()) r.status = merge(r.status, RunStatus::diverged);
            const auto t_ext = member_exit_times(ens, c.T, c.delta);
            if (crossed(t_ext).size() != t_ext.size()) r.status = merge(r.status, RunStatus::no_crossing);
            json m = exit_json(t_ext, c.T);
            m["p"] = p;
            m["gamma"] = tp.gamma;
            m["diverged"] = failures_json(ens.failures);
            measured.push_back(m);
            if (!crossed(t_ext).empty()) {
                const ScalarStats s = reduce_scalars(crossed(t_ext));
                meas = s.mean;
                meas_se = s.se;
                record("measured", meas, meas_se, "numeric", {});
            }
        }
        col_p.push_back(p);
        col_gamma.push_back(tp.gamma);
        col_anl.push_back(anl);
        col_qnc.push_back(qnc);
        col_qnc_err.push_back(qnc_se);
        col_meas.push_back(meas);
        col_meas_err.push_back(meas_se);
        col_ra.push_back(meas / anl);
        col_ra_err.push_back(meas_se / anl);
        col_rq.push_back(meas / qnc);
        col_rq_err.push_back(std::hypot(meas_se / qnc, meas * qnc_se / (qnc * qnc)));
    }
    art.columns("exit_table.csv",
                {"p", "gamma", "t_annealed", "t_quenched", "t_quenched_err", "t_measured", "t_measured_err",
                 "ratio_annealed", "ratio_annealed_err", "ratio_quenched", "ratio_quenched_err"},
                {col_p, col_gamma, col_anl, col_qnc, col_qnc_err, col_meas, col_meas_err, col_ra, col_ra_err, col_rq,
                 col_rq_err});
    if (c.members > 0) {
        if (want_anl) art.series("ratio_annealed.csv", Series{"p", "ratio", col_p, col_ra, col_ra_err});
        if (want_qnc) art.series("ratio_quenched.csv", Series{"p", "ratio", col_p, col_rq, col_rq_err});
    }
    r.summary = {{"T", c.T}, {"records", records}, {"measured", measured}, {"diverged", failures_json(r.failures)}};
    return r;
}

ExperimentResult run_width_sweep(const ExperimentConfig& c, Artifacts& art) {
    ExperimentResult r;
    const double s1 = min_steps_and_gain(1, static_cast<double>(c.d), c.delta, c.T).s_min;
    std::vector<double> col_p, col_g, col_t, col_s, col_gain, col_meas, col_meas_err;
    json rows = json::array();
    for (int p : c.p_list) {
        TaskParams tp = task_params(c, p);
        tp.gamma = gamma_opt(p, c.delta);
        ExitTimeQuery q;
        q.T = c.T;
        q.params = tp;
        const double t = exit_time_general_p(q).value;
        const MinStepsAndGain g = min_steps_and_gain(p, static_cast<double>(c.d), c.delta, c.T);
        double meas = kNaN, meas_se = kNaN;
        json row = {{"p", p}, {"gamma_opt", tp.gamma}, {"t_ext", t}, {"s_min", g.s_min}, {"gain", s1 / g.s_min},
                    {"gain_limit", g.gain_limit}};
        if (c.members > 0) {
            const Ensemble ens = run_sgd_ensemble(sgd_spec(c, tp, c.members));
            r.failures.insert(r.failures.end(), ens.failures.begin(), ens.failures.end());
            if (!ens.failures.empty()) r.status = merge(r.status, RunStatus::diverged);
            const auto t_ext = member_exit_times(ens, c.T, c.delta);
            if (crossed(t_ext).size() != t_ext.size()) r.status = merge(r.status, RunStatus::no_crossing);
            const double scale = static_cast<double>(p) * static_cast<double>(c.d) / tp.gamma;
            if (!crossed(t_ext).empty()) {
                const ScalarStats s = reduce_scalars(crossed(t_ext));
                meas = s.mean * scale;
                meas_se = s.se * scale;
            }
            row["measured_t_ext"] = exit_json(t_ext, c.T);
            row["measured_steps"] = std::isnan(meas) ? json(nullptr) : json(meas);
        }
        rows.push_back(row);
        col_p.push_back(p);
        col_g.push_back(tp.gamma);
        col_t.push_back(t);
        col_s.push_back(g.s_min);
        col_gain.push_back(s1 / g.s_min);
        col_meas.push_back(meas);
        col_meas_err.push_back(meas_se);
    }
    art.columns("width_sweep.csv", {"p", "gamma_opt", "t_ext", "s_min", "gain", "steps_measured", "steps_measured_err"},
                {col_p, col_g, col_t, col_s, col_gain, col_meas, col_meas_err});
    art.series("gain.csv", Series{"p", "gain", col_p, col_gain, {}});
    r.summary = {{"T", c.T},
                 {"d", c.d},
                 {"delta", c.delta},
                 {"gain_limit", (12.0 + c.delta) / (2.0 + c.delta)},
                 {"rows", rows},
                 {"diverged", failures_json(r.failures)}};
    return r;
}

ExperimentResult run_second_layer(const ExperimentConfig& c, Artifacts& art) {
    ExperimentResult r;
    std::vector<std::vector<std::optional<double>>> times(2);
    json sides = json::object();
    for (int trained = 0; trained < 2; ++trained) {
        TaskParams tp = task_params(c, c.p);
        tp.train_a = trained == 1;
        const std::string tag = trained ? "trained" : "fixed";
        const Ensemble ens = run_sgd_ensemble(sgd_spec(c, tp, c.members));
        r.failures.insert(r.failures.end(), ens.failures.begin(), ens.failures.end());
        if (!ens.failures.empty()) r.status = merge(r.status, RunStatus::diverged);
        if (ens.runs.empty()) continue;
        write_members(art, c, ens, "members_" + tag);
        art.series("max_m_" + tag + ".csv", stats_series(max_correlation_stats(ens), "max_m"));
        art.series("risk_" + tag + ".csv", stats_series(risk_stats(ens), "risk"));
        std::vector<std::optional<double>> cross;
        for (const Trajectory& tr : ens.runs)
            cross.push_back(crossing_time(tr.times(), max_correlation_diagnostic(tr), c.level, true));
        if (crossed(cross).size() != cross.size()) r.status = merge(r.status, RunStatus::no_crossing);
        json j = exit_json(cross, c.T);
        j.erase("T");
        j["gamma"] = tp.gamma;
        j["members"] = ens.members;
        sides[tag] = j;
        times[trained] = cross;
    }
    r.summary = {{"level", c.level}, {"p", c.p}, {"d", c.d}, {"diverged", failures_json(r.failures)}};
    r.summary["crossing"] = sides;
    const auto a = crossed(times[0]), b = crossed(times[1]);
    if (!a.empty() && !b.empty()) {
        const ScalarStats sa = reduce_scalars(a), sb = reduce_scalars(b);
        const double diff = sb.mean - sa.mean;
        const double se = std::hypot(sa.se, sb.se);
        r.summary["difference"] = diff;
        r.summary["combined_se"] = se;
        r.summary["agree_within_2se"] = std::abs(diff) <= 2.0 * se;
    }
    return r;
}

ExperimentResult run_landscape(const ExperimentConfig& c, Artifacts& art) {
    ExperimentResult r;
    json points = json::array();
    for (const CriticalPoint& cp : classify_critical_points(c.rho, c.delta)) points.push_back(to_json(cp));
    art.json_file("landscape.json", points);
    r.summary = {{"rho", c.rho}, {"delta", c.delta}, {"critical_points", points}};
    return r;
}

json manifest(const ExperimentConfig& c, const ExperimentResult& r, const std::vector<std::string>& files) {
    json cfg = json::object();
    for (const auto& [k, v] : config_fields(c)) cfg[k] = v;
    return {{"tool", "medlab"},
            {"version", version()},
            {"kind", to_string(c.kind)},
            {"status", to_string(r.status)},
            {"config", cfg},
            {"seeds",
             {{"base", c.seed},
              {"members", c.members},
              {"streams", "member k draws data, noise and (per-member) initialization from stream k of the base seed"}}},
            {"files", files},
            {"diverged_members", failures_json(r.failures)},
            {"warnings", r.warnings}};
}

}  // namespace

std::string version() { return MEDLAB_VERSION; }

std::string to_string(RunStatus status) {
    switch (status) {
        case RunStatus::ok: return "ok";
        case RunStatus::diverged: return "diverged";
        case RunStatus::no_crossing: return "no-crossing";
    }
    return "unknown";
}

int exit_code(RunStatus status) {
    switch (status) {
        case RunStatus::ok: return 0;
        case RunStatus::diverged: return 3;
        case RunStatus::no_crossing: return 4;
    }
    return 1;
}

TaskParams task_params(const ExperimentConfig& c, int p) {
    TaskParams tp;
    tp.d = c.d;
    tp.p = p;
    tp.gamma = c.gamma;
    const bool scaled = c.kind == ExperimentKind::exit_table || c.kind == ExperimentKind::width_sweep ||
                        c.kind == ExperimentKind::second_layer_compare;
    if (scaled && c.gamma_over_p > 0.0) tp.gamma = c.gamma_over_p * p;
    tp.delta = c.delta;
    tp.spherical = c.spherical;
    tp.train_a = c.train_a;
    return tp;
}

OverlapState initial_state(const ExperimentConfig& c, const TaskParams& params) {
    if (c.init == "orthogonal") return OverlapState::orthogonal(params.p);
    if (c.init == "per-member") throw ConfigError("invalid init: per-member has no single initial state");
    SgdEnsembleSpec s;
    s.params = params;
    s.seed = c.seed;
    s.init = parse_ensemble_init(c.init);
    s.m0 = c.m0;
    s.second = parse_second_layer_init(c.second_init);
    if (!params.spherical && s.init == EnsembleInit::teacher_overlap)
        throw ConfigError("invalid init: teacher-overlap builds a spherical network; use shared-random");
    return ensemble_initial_state(s, 0);
}

BandComparison compare_to_reference(const SeriesStats& stats, const std::vector<double>& reference, double delta,
                                    double band) {
    if (reference.size() != stats.x.size()) throw ConfigError("reference does not match the ensemble grid");
    BandComparison b;
    const std::size_t end = window_end(reference, delta);
    b.window_end = stats.x[end - 1];
    for (std::size_t i = 0; i < end; ++i) {
        const double diff = std::abs(stats.mean[i] - reference[i]);
        // Identical starting points give a zero standard error and zero difference.
        const double tiny = 1e-12 * std::max(1.0, std::abs(reference[i]));
        if (stats.se[i] <= tiny && diff <= tiny) continue;
        const double z = stats.se[i] > 0.0 ? diff / stats.se[i] : std::numeric_limits<double>::infinity();
        ++b.points;
        if (z > band) ++b.over;
        if (z > b.max_z) {
            b.max_z = z;
            b.t_at_max = stats.x[i];
        }
    }
    return b;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    Artifacts art(config.out);
    art.text("config.txt", write_config(config));
    ExperimentResult r;
    {
        WarningCapture cap;
        switch (config.kind) {
            case ExperimentKind::ode: r = run_ode(config, art); break;
            case ExperimentKind::sgd: r = run_sgd_kind(config, art); break;
            case ExperimentKind::sde: r = run_sde_kind(config, art); break;
            case ExperimentKind::exit_table: r = run_exit_table(config, art); break;
            case ExperimentKind::width_sweep: r = run_width_sweep(config, art); break;
            case ExperimentKind::second_layer_compare: r = run_second_layer(config, art); break;
            case ExperimentKind::landscape: r = run_landscape(config, art); break;
        }
        r.warnings.insert(r.warnings.end(), cap.messages().begin(), cap.messages().end());
    }
    r.summary["status"] = to_string(r.status);
    r.summary["kind"] = to_string(config.kind);
    art.json_file("summary.json", r.summary);
    art.claim("manifest.json");
    r.files = art.files();
    const json m = manifest(config, r, r.files);
    std::ofstream os(config.out / "manifest.json");
    os << m.dump(2) << '\n';
    if (!os) throw ConfigError("invalid out: failed writing manifest.json");
    return r;
}

std::vector<SelftestCheck> run_selftest(std::uint64_t seed, std::optional<int> workers) {
    std::vector<SelftestCheck> out;
    auto add = [&](const std::string& name, bool ok, const std::string& detail) { out.push_back({name, ok, detail}); };
    auto fmt = [](double x) { return format_double(x); };

    {
        NormalSource rng(seed, 0, StreamPurpose::monte_carlo);
        double worst = 0.0;
        for (int rep = 0; rep < 20; ++rep) {
            Eigen::MatrixXd A(4, 4);
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) A(i, j) = rng();
            const OmegaMatrix om(A * A.transpose() / 4.0);
            const auto w = [&](int a, int b) { return om(a, b); };
            worst = std::max(worst, std::abs(wick_moment({0, 1, 2, 3}, om) -
                                             (w(0, 1) * w(2, 3) + w(0, 2) * w(1, 3) + w(0, 3) * w(1, 2))));
            worst = std::max(worst, std::abs(wick_moment({0, 1, 2, 2, 3, 3}, om) - sixth_moment_closed(0, 1, 2, 3, om)));
        }
        add("moments: pairing sums equal the closed forms", worst < 1e-12, "max abs error " + fmt(worst));
    }
    {
        TaskParams tp;
        tp.d = 1000000;
        tp.p = 1;
        tp.gamma = 0.05;
        tp.delta = 0.5;
        OverlapState s = OverlapState::orthogonal(1);
        s.m(0) = 0.3;
        OdeOptions o;
        o.horizon = 12.0;
        const Trajectory traj = integrate(s, tp, o);
        const double excess = traj.back().risk - 0.5 * tp.delta;
        const double expected = tp.gamma * tp.delta / (1.0 - 6.0 * tp.gamma);
        const double rel = std::abs(excess - expected) / expected;
        add("ode: plateau excess risk", rel < 1e-6, "relative error " + fmt(rel));
    }
    {
        double worst = 0.0;
        for (int p : {1, 2, 4}) {
            TaskParams tp;
            tp.d = 1000000;
            tp.p = p;
            tp.gamma = 0.05;
            OverlapState s = OverlapState::orthogonal(p);
            s.m.setConstant(1.0 / std::sqrt(static_cast<double>(tp.d)));
            const Trajectory lin = linearized_trajectory(s, tp, 1e-4, 6.0);
            ExitTimeQuery q;
            q.T = 0.3;
            q.params = tp;
            const double formula = exit_time_general_p(q).value;
            worst = std::max(worst, std::abs(exit_time_numeric(lin, 0.3, 0.0) - formula) / formula);
        }
        add("exit time: linearized crossing equals the annealed formula", worst < 5e-3, "max relative error " + fmt(worst));
    }
    {
        const double g = gamma_opt(2, 0.0);
        TaskParams tp;
        tp.d = 100000;
        tp.p = 2;
        double best = 0.0, best_steps = std::numeric_limits<double>::infinity();
        WarningCapture quiet;
        for (int k = 1; k < 400; ++k) {
            tp.gamma = 2.0 * g * k / 400.0;
            if (linearized_rates(tp).omega_M <= 0.0) break;
            const double s = steps_to_exit(0.3, tp);
            if (s < best_steps) {
                best_steps = s;
                best = tp.gamma;
            }
        }
        add("exit time: steps-to-exit minimum at gamma_opt", std::abs(best - g) / g < 0.01,
            "grid minimum " + fmt(best) + ", closed form " + fmt(g));
    }
    {
        const bool ok = hyp2f2(0.0) == 1.0 && std::abs(hyp2f2(-10.0 + 1e-9) - hyp2f2(-10.0 - 1e-9)) < 1e-8;
        add("exit time: hypergeometric series and its large-argument route agree", ok,
            "2F2(0) = " + fmt(hyp2f2(0.0)) + ", 2F2(-10) = " + fmt(hyp2f2(-10.0)));
    }
    {
        const auto pts = classify_critical_points(1.0, 0.0);
        const bool ok = pts.size() == 7 && pts[0].kind == CriticalKind::maximum &&
                        pts[1].kind == CriticalKind::strict_saddle && pts[2].kind == CriticalKind::minimum &&
                        pts[3].kind == CriticalKind::minimum && pts[4].kind == CriticalKind::strict_saddle &&
                        pts[5].kind == CriticalKind::minimum && pts[6].kind == CriticalKind::minimum;
        add("landscape: critical points classified from their spectra", ok, std::to_string(pts.size()) + " points");
    }
    {
        SgdEnsembleSpec s;
        s.params.d = 1000;
        s.params.p = 1;
        s.params.gamma = 0.1;
        s.params.delta = 0.1;
        s.members = 20;
        s.seed = seed;
        s.init = EnsembleInit::teacher_overlap;
        s.m0 = 0.3;
        s.n_steps = steps_for(3.0, s.params);
        s.stride = default_stride(s.n_steps, 200);
        s.workers = workers;
        const Ensemble ens = run_sgd_ensemble(s);
        const SeriesStats rs = risk_stats(ens);
        OdeOptions o;
        o.horizon = rs.x.back() + 1e-3;
        o.stride = 1;
        const Trajectory ode = integrate(ensemble_initial_state(s, 0), s.params, o);
        const BandComparison b = compare_to_reference(rs, risk_at(ode, rs.x), 0.1, 4.0);
        add("sgd: ensemble mean risk follows the ode", b.over == 0, "max z " + fmt(b.max_z));

        s.members = 4;
        s.workers = 1;
        const SeriesStats one = risk_stats(run_sgd_ensemble(s));
        s.workers = 3;
        const SeriesStats three = risk_stats(run_sgd_ensemble(s));
        add("sgd: results do not depend on the worker count", one.mean == three.mean && one.se == three.se,
            "1 vs 3 workers");
    }
    return out;
}

void write_selftest(const fs::path& out, const std::vector<SelftestCheck>& checks, std::uint64_t seed) {
    Artifacts art(out);
    json a = json::array();
    bool all = true;
    for (const SelftestCheck& c : checks) {
        a.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
        all = all && c.passed;
    }
    art.text("config.txt", "seed = " + std::to_string(seed) + "\n");
    art.json_file("selftest.json", {{"passed", all}, {"checks", a}});
    art.claim("manifest.json");
    const json m = {{"tool", "medlab"},
                    {"version", version()},
                    {"kind", "selftest"},
                    {"status", all ? "ok" : "failed"},
                    {"config", {{"seed", std::to_string(seed)}}},
                    {"seeds", {{"base", seed}}},
                    {"files", art.files()},
                    {"diverged_members", json::array()},
                    {"warnings", json::array()}};
    std::ofstream os(out / "manifest.json");
    os << m.dump(2) << '\n';
}

}  // namespace medlab
