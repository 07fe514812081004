#include "medlab/ensemble.hpp"

#include "medlab/errors.hpp"
#include "medlab/parallel.hpp"
#include "medlab/rng.hpp"

#include <algorithm>
#include <cmath>

namespace medlab {

namespace {

struct Network {
    TeacherModel teacher;
    StudentNetwork student;
};

Network ensemble_network(const SgdEnsembleSpec& spec, std::size_t member) {
    const TaskParams& tp = spec.params;
    const std::uint64_t stream = spec.init == EnsembleInit::per_member ? member : 0;
    Network net{TeacherModel::random(tp.d, tp.delta, spec.seed, stream), {}};
    if (spec.init == EnsembleInit::teacher_overlap) {
        net.student = StudentNetwork::with_teacher_overlap(net.teacher, tp.p, spec.m0, spec.seed, stream);
        if (spec.second == SecondLayerInit::bernoulli) {
            NormalSource rng(spec.seed, stream | (std::uint64_t{1} << 63), StreamPurpose::init);
            for (int j = 0; j < tp.p; ++j) net.student.a(j) = rng.uniform() < 0.5 ? 0.0 : 1.0;
        }
    } else {
        net.student = StudentNetwork::random(tp.d, tp.p, tp.spherical, spec.seed, spec.second, stream);
    }
    return net;
}

template <class Run>
Ensemble collect(std::size_t members, std::optional<int> workers, Run&& run) {
    struct Outcome {
        std::optional<Trajectory> traj;
        std::optional<MemberFailure> failure;
    };
    auto outcomes = parallel_map(members, resolve_workers(workers), [&](std::size_t k) {
        Outcome o;
        try {
            o.traj = run(k);
        } catch (const DivergenceError& e) {
            o.failure = MemberFailure{k, "divergence", e.what()};
        } catch (const IntegrationBlowupError& e) {
            o.failure = MemberFailure{k, "integration-blowup", e.what()};
        } catch (const StepRejectedError& e) {
            o.failure = MemberFailure{k, "step-rejected", e.what()};
        }
        return o;
    });
    Ensemble ens;
    for (std::size_t k = 0; k < members; ++k) {
        if (outcomes[k].traj) {
            ens.members.push_back(k);
            ens.runs.push_back(std::move(*outcomes[k].traj));
        } else {
            ens.failures.push_back(*outcomes[k].failure);
        }
    }
    return ens;
}

template <class F>
SeriesStats stats_over_runs(const Ensemble& ens, F&& series) {
    if (ens.runs.empty()) throw ConfigError("ensemble has no completed runs");
    const std::vector<double> x = ens.runs.front().times();
    std::vector<std::vector<double>> rows;
    rows.reserve(ens.runs.size());
    for (const Trajectory& tr : ens.runs) {
        if (tr.times() != x) throw ConfigError("ensemble runs do not share record times");
        rows.push_back(series(tr));
    }
    return reduce_series(x, rows);
}

}  // namespace

SeriesStats reduce_series(const std::vector<double>& x, const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ConfigError("no series to reduce");
    SeriesStats s;
    s.x = x;
    s.members = rows.size();
    s.mean.assign(x.size(), 0.0);
    s.se.assign(x.size(), 0.0);
    for (const auto& r : rows)
        if (r.size() != x.size()) throw ConfigError("series length does not match the x grid");
    const double n = static_cast<double>(rows.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double sum = 0.0;
        for (const auto& r : rows) sum += r[i];
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& r : rows) ss += (r[i] - mean) * (r[i] - mean);
        s.mean[i] = mean;
        s.se[i] = rows.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    }
    return s;
}

ScalarStats reduce_scalars(const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("no values to reduce");
    ScalarStats s;
    s.n = values.size();
    const double n = static_cast<double>(s.n);
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / n;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = s.n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    s.se = s.sd / std::sqrt(n);
    return s;
}

std::vector<double> max_correlation_diagnostic(const Trajectory& traj) {
    std::vector<double> out;
    out.reserve(traj.size());
    for (const TrajectoryPoint& pt : traj.points()) out.push_back(pt.state.m.cwiseAbs().maxCoeff());
    return out;
}

double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at) {
    if (x.empty() || x.size() != y.size()) throw ConfigError("interpolation needs matching non-empty x and y");
    const double span = std::max(1.0, std::abs(x.back()));
    if (at < x.front() - 1e-12 * span || at > x.back() + 1e-12 * span)
        throw ConfigError("interpolation point outside the recorded range");
    const auto it = std::lower_bound(x.begin(), x.end(), at);
    if (it == x.begin()) return y.front();
    if (it == x.end()) return y.back();
    const std::size_t i = static_cast<std::size_t>(it - x.begin());
    const double w = (at - x[i - 1]) / (x[i] - x[i - 1]);
    return y[i - 1] + w * (y[i] - y[i - 1]);
}

std::vector<double> risk_at(const Trajectory& traj, const std::vector<double>& times) {
    const std::vector<double> x = traj.times();
    const std::vector<double> y = traj.risks();
    std::vector<double> out;
    out.reserve(times.size());
    for (double t : times) out.push_back(interpolate(x, y, t));
    return out;
}

SgdEngine parse_sgd_engine(const std::string& name) {
    if (name == "overlap-chain") return SgdEngine::overlap_chain;
    if (name == "explicit") return SgdEngine::explicit_weights;
    throw ConfigError("unknown SGD engine '" + name + "' (expected overlap-chain or explicit)");
}

std::string to_string(SgdEngine engine) { return engine == SgdEngine::overlap_chain ? "overlap-chain" : "explicit"; }

EnsembleInit parse_ensemble_init(const std::string& name) {
    if (name == "teacher-overlap") return EnsembleInit::teacher_overlap;
    if (name == "shared-random") return EnsembleInit::shared_random;
    if (name == "per-member") return EnsembleInit::per_member;
    throw ConfigError("unknown ensemble init '" + name + "' (expected teacher-overlap, shared-random or per-member)");
}

std::string to_string(EnsembleInit init) {
    switch (init) {
        case EnsembleInit::teacher_overlap: return "teacher-overlap";
        case EnsembleInit::shared_random: return "shared-random";
        case EnsembleInit::per_member: return "per-member";
    }
    return "unknown";
}

OverlapState ensemble_initial_state(const SgdEnsembleSpec& spec, std::size_t member) {
    if (spec.initial_state) return *spec.initial_state;
    const Network net = ensemble_network(spec, member);
    return measure_overlaps(net.student, net.teacher);
}

Ensemble run_sgd_ensemble(const SgdEnsembleSpec& spec) {
    spec.params.validate();
    if (spec.members < 1) throw ConfigError("members must be at least 1");
    if (spec.n_steps < 1) throw ConfigError("n_steps must be at least 1");
    SgdOptions base;
    base.n_steps = spec.n_steps;
    base.stride = spec.stride > 0 ? spec.stride : default_stride(spec.n_steps, 1000);
    base.seed = spec.seed;

    if (spec.initial_state) {
        if (spec.engine != SgdEngine::overlap_chain)
            throw ConfigError("a fixed overlap state can only start the overlap-chain engine");
        return collect(spec.members, spec.workers, [&](std::size_t k) {
            SgdOptions opt = base;
            opt.path = k;
            return run_sgd_overlaps(*spec.initial_state, spec.params, opt);
        });
    }
    std::optional<Network> shared;
    std::optional<OverlapState> shared_state;
    if (spec.init != EnsembleInit::per_member) {
        shared = ensemble_network(spec, 0);
        shared_state = measure_overlaps(shared->student, shared->teacher);
    }

    return collect(spec.members, spec.workers, [&](std::size_t k) {
        SgdOptions opt = base;
        opt.path = k;
        if (spec.engine == SgdEngine::explicit_weights) {
            if (shared) return run_sgd(shared->teacher, shared->student, spec.params, opt);
            const Network net = ensemble_network(spec, k);
            return run_sgd(net.teacher, net.student, spec.params, opt);
        }
        if (shared_state) return run_sgd_overlaps(*shared_state, spec.params, opt);
        const Network net = ensemble_network(spec, k);
        return run_sgd_overlaps(measure_overlaps(net.student, net.teacher), spec.params, opt);
    });
}

Ensemble run_sde_ensemble(const SdeEnsembleSpec& spec) {
    spec.params.validate();
    if (spec.members < 1) throw ConfigError("members must be at least 1");
    return collect(spec.members, spec.workers, [&](std::size_t k) {
        SdeOptions opt = spec.options;
        opt.seed = spec.seed;
        opt.path = k;
        return integrate_sde(spec.initial, spec.params, opt);
    });
}

SeriesStats risk_stats(const Ensemble& ensemble) {
    return stats_over_runs(ensemble, [](const Trajectory& tr) { return tr.risks(); });
}

SeriesStats max_correlation_stats(const Ensemble& ensemble) {
    return stats_over_runs(ensemble, [](const Trajectory& tr) { return max_correlation_diagnostic(tr); });
}

}  // namespace medlab
