#include "medlab/exit_time.hpp"

#include "medlab/diagnostics.hpp"
#include "medlab/errors.hpp"
#include "medlab/parallel.hpp"
#include "medlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace medlab {

namespace {

constexpr std::size_t kChunk = 8192;
constexpr std::size_t kMinMcSamples = 1000;
constexpr int kMaxSeriesTerms = 10000;

void check_threshold(double T) {
    if (!(T > 0.0 && T < 1.0)) throw ConfigError("threshold T must lie in (0, 1)");
}

void check_mc_samples(std::size_t n) {
    if (n < kMinMcSamples) throw ConfigError("mc_samples must be at least 1000");
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

struct ChunkSum {
    double sum = 0.0;
    double sumsq = 0.0;
    std::size_t n = 0;
    std::size_t rejected = 0;
};

// Chunked Monte Carlo: chunk c draws from stream c, results reduced in chunk order.
template <class Draw>
MonteCarloMean chunked_mean(std::size_t samples, std::uint64_t seed, std::optional<int> workers, Draw draw) {
    const std::size_t chunks = (samples + kChunk - 1) / kChunk;
    const auto parts = parallel_map(chunks, resolve_workers(workers), [&](std::size_t c) {
        NormalSource rng(seed, c, StreamPurpose::monte_carlo);
        const std::size_t count = std::min(kChunk, samples - c * kChunk);
        ChunkSum s;
        for (std::size_t k = 0; k < count; ++k) {
            const std::optional<double> v = draw(rng);
            if (!v || !std::isfinite(*v)) {
                ++s.rejected;
                continue;
            }
            s.sum += *v;
            s.sumsq += *v * *v;
            ++s.n;
        }
        return s;
    });
    ChunkSum total;
    for (const ChunkSum& s : parts) {
        total.sum += s.sum;
        total.sumsq += s.sumsq;
        total.n += s.n;
        total.rejected += s.rejected;
    }
    if (total.n < 2) throw ConfigError("too few admissible Monte Carlo draws");
    const double n = static_cast<double>(total.n);
    const double mean = total.sum / n;
    const double var = std::max(0.0, (total.sumsq - n * mean * mean) / (n - 1.0));
    return MonteCarloMean{mean, std::sqrt(var / n), total.n, total.rejected};
}

double p1_denominator(double gamma, double delta) {
    const double den = 8.0 * (1.0 - 6.0 * gamma) - 4.0 * gamma * delta;
    if (den <= 0.0)
        throw UnstableRateError("8(1 - 6 gamma) - 4 gamma Delta = " + fmt(den) + " is not positive; no escape");
    return den;
}

InitialOverlapSums draw_Pdp(std::int64_t d, int p, NormalSource& rng) {
    const int n = p + 1;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        L(i, i) = std::sqrt(rng.chi_squared(static_cast<double>(d - i)));
        for (int k = 0; k < i; ++k) L(i, k) = rng();
    }
    const Eigen::MatrixXd G = L * L.transpose();
    const double dd = static_cast<double>(d);
    InitialOverlapSums out;
    for (int j = 1; j < n; ++j) out.mu0 += G(0, j) * G(0, j) / (G(0, 0) * G(j, j));
    for (int j = 1; j < n; ++j)
        for (int l = j + 1; l < n; ++l) out.tau0 += G(j, l) * G(j, l) / (G(j, j) * G(l, l));
    out.mu0 *= dd;
    out.tau0 *= 2.0 * dd;
    return out;
}

double dawson_integral(double X) {
    // (F, I) with F' = 1 - 2xF, I' = F, F(0) = I(0) = 0.
    constexpr double kSwitch = 50.0;
    const double x_end = std::min(X, kSwitch);
    const int steps = std::max(1, static_cast<int>(std::ceil(x_end / 5e-4)));
    const double h = x_end / steps;
    double F = 0.0, I = 0.0;
    auto f = [](double x, double F) { return 1.0 - 2.0 * x * F; };
    for (int k = 0; k < steps; ++k) {
        const double x = k * h;
        const double k1 = f(x, F);
        const double k2 = f(x + 0.5 * h, F + 0.5 * h * k1);
        const double k3 = f(x + 0.5 * h, F + 0.5 * h * k2);
        const double k4 = f(x + h, F + h * k3);
        const double l1 = F, l2 = F + 0.5 * h * k1, l3 = F + 0.5 * h * k2, l4 = F + h * k3;
        F += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        I += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    }
    if (X > kSwitch) {
        // F(x) = 1/(2x) + 1/(4x^3) + 3/(8x^5) + 15/(16x^7) + O(x^-9)
        auto tail = [](double x) {
            const double u = 1.0 / (x * x);
            return 0.5 * std::log(x) - u / 8.0 - 3.0 * u * u / 32.0 - 15.0 * u * u * u / 96.0;
        };
        I += tail(X) - tail(kSwitch);
    }
    return I;
}

}  // namespace

ExitMode parse_exit_mode(const std::string& name) {
    if (name == "annealed") return ExitMode::annealed;
    if (name == "quenched") return ExitMode::quenched;
    throw ConfigError("unknown exit-time mode '" + name + "' (expected annealed or quenched)");
}

std::string to_string(ExitMode mode) { return mode == ExitMode::annealed ? "annealed" : "quenched"; }

void ExitTimeQuery::validate() const {
    check_threshold(T);
    params.validate();
    if (mode == ExitMode::quenched) check_mc_samples(mc_samples);
}

LinearizedRates linearized_rates(const TaskParams& params) {
    const double p = params.p, g = params.gamma, D = params.delta;
    LinearizedRates r;
    r.omega_M = 4.0 * (1.0 - (g / p) * (1.0 + 1.0 / p + 4.0 / (p * p) + D / 2.0));
    r.omega_Q = (8.0 / p) * (1.0 - 8.0 * g / (p * p));
    r.mu = 4.0 * (1.0 - 6.0 * g) - 2.0 * g * D;
    r.sigma2 = g / (p * static_cast<double>(params.d)) * (48.0 + 4.0 * D);
    return r;
}

std::optional<double> crossing_time(const std::vector<double>& times, const std::vector<double>& values, double level,
                                    bool rising) {
    if (times.size() != values.size()) throw SizeError("crossing_time: times and values differ in length");
    auto reached = [&](double v) { return rising ? v >= level : v <= level; };
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!reached(values[i])) continue;
        if (i == 0) return times[0];
        const double v0 = values[i - 1], v1 = values[i];
        const double frac = (level - v0) / (v1 - v0);
        return times[i - 1] + frac * (times[i] - times[i - 1]);
    }
    return std::nullopt;
}

double exit_time_numeric(const Trajectory& traj, double T, double delta) {
    check_threshold(T);
    if (traj.empty()) throw InvalidStateError("exit_time_numeric: empty trajectory");
    const double r0 = traj.front().risk - 0.5 * delta;
    if (!(r0 > 0.0)) throw InvalidStateError("exit_time_numeric: initial excess risk is not positive");
    std::vector<double> excess = traj.risks();
    for (double& r : excess) r -= 0.5 * delta;
    const std::optional<double> t = crossing_time(traj.times(), excess, (1.0 - T) * r0, false);
    if (!t) {
        const double ratio = excess.back() / r0;
        throw NoCrossingError(ratio, "excess risk never fell to " + fmt(1.0 - T) + " of its initial value (final ratio " +
                                         fmt(ratio) + ")");
    }
    return *t;
}

double annealed_exit_time_p1(double T, double d, double gamma, double delta) {
    check_threshold(T);
    if (!(d >= 1.0)) throw ConfigError("d must be at least 1");
    return std::log(T * d + (1.0 - T)) / p1_denominator(gamma, delta);
}

MonteCarloMean quenched_exit_time_p1(double T, double d, double gamma, double delta, std::size_t mc_samples,
                                     std::uint64_t seed, std::optional<int> workers) {
    check_threshold(T);
    check_mc_samples(mc_samples);
    if (!(d >= 1.0)) throw ConfigError("d must be at least 1");
    const double den = p1_denominator(gamma, delta);
    MonteCarloMean out = chunked_mean(mc_samples, seed, workers, [&](NormalSource& rng) -> std::optional<double> {
        const double g = rng();
        const double mu0 = g * g;
        if (!(mu0 > 0.0)) return std::nullopt;
        return std::log(T * d / mu0 + (1.0 - T)) / den;
    });
    if (out.rejected > 0) warn("quenched exit time: rejected " + std::to_string(out.rejected) + " degenerate draws");
    return out;
}

InitialOverlapSums sample_Pdp(std::int64_t d, int p, std::uint64_t seed, std::uint64_t stream) {
    if (p < 1) throw ConfigError("p must be at least 1");
    if (d <= p) throw IllConditionedInitError("sample_Pdp needs d > p");
    NormalSource rng(seed, stream, StreamPurpose::init);
    return draw_Pdp(d, p, rng);
}

std::optional<double> exit_time_from_overlaps(double T, const TaskParams& params, double mu0, double tau0) {
    check_threshold(T);
    const LinearizedRates r = linearized_rates(params);
    if (r.omega_M <= 0.0) throw UnstableRateError("omega_M = " + fmt(r.omega_M) + " is not positive; no escape");
    const double p = params.p, d = static_cast<double>(params.d);
    const double num = T * p * (p + 1.0) * d + (2.0 * mu0 * p - tau0) * (1.0 - T);
    const double den = 2.0 * mu0 * p;
    if (!(num > 0.0) || !(den > 0.0)) return std::nullopt;
    return std::log(num / den) / (2.0 * r.omega_M);
}

ExitTimeEstimate exit_time_general_p(const ExitTimeQuery& query) {
    query.validate();
    const TaskParams& P = query.params;
    const LinearizedRates r = linearized_rates(P);
    if (r.omega_M <= 0.0) throw UnstableRateError("omega_M = " + fmt(r.omega_M) + " is not positive; no escape");
    if (r.omega_Q <= 0.0)
        warn("omega_Q = " + fmt(r.omega_Q) + " is not positive; the linearized exit time assumes decaying student overlaps");
    const double p = P.p, d = static_cast<double>(P.d), T = query.T;
    ExitTimeEstimate out;
    if (query.mode == ExitMode::annealed) {
        out.value = std::log((T * (p + 1.0) * d + (p + 1.0) * (1.0 - T)) / (2.0 * p)) / (2.0 * r.omega_M);
        return out;
    }
    if (P.d <= P.p) throw IllConditionedInitError("quenched exit time needs d > p");
    const MonteCarloMean mc =
        chunked_mean(query.mc_samples, query.seed, query.workers, [&](NormalSource& rng) -> std::optional<double> {
            const InitialOverlapSums s = draw_Pdp(P.d, P.p, rng);
            return exit_time_from_overlaps(T, P, s.mu0, s.tau0);
        });
    if (mc.rejected > 0)
        warn("quenched exit time: rejected " + std::to_string(mc.rejected) + " of " + std::to_string(query.mc_samples) +
             " draws with a non-positive log argument");
    out.value = mc.mean;
    out.se = mc.se;
    out.samples = mc.samples;
    out.rejected = mc.rejected;
    return out;
}

double gamma_opt(int p, double delta) {
    if (p < 1) throw ConfigError("p must be at least 1");
    if (delta < 0.0) throw ConfigError("Delta must be non-negative");
    const double q = p;
    return q * q * q / (8.0 + 2.0 * q + (2.0 + delta) * q * q);
}

double steps_to_exit(double T, const TaskParams& params) {
    if (!(params.gamma > 0.0)) throw ConfigError("steps_to_exit needs gamma > 0");
    ExitTimeQuery q;
    q.T = T;
    q.params = params;
    const double t = exit_time_general_p(q).value;
    return static_cast<double>(params.p) * static_cast<double>(params.d) / params.gamma * t;
}

MinStepsAndGain min_steps_and_gain(int p, double d, double delta, double T) {
    check_threshold(T);
    if (p < 1) throw ConfigError("p must be at least 1");
    if (delta < 0.0) throw ConfigError("Delta must be non-negative");
    const double q = p;
    MinStepsAndGain out;
    out.s_min = d * (8.0 + 2.0 * q + (2.0 + delta) * q * q) *
                std::log((T * (q + 1.0) * d + (q + 1.0) * (1.0 - T)) / (2.0 * q)) / (4.0 * q * q);
    out.gain_limit = (12.0 + delta) / (2.0 + delta);
    return out;
}

double hyp2f2(double z, double tol) {
    if (!(tol > 0.0)) throw ConfigError("hyp2f2: tol must be positive");
    if (!std::isfinite(z)) throw PrecisionError("hyp2f2: non-finite argument");
    if (z < -10.0) {
        const double X = std::sqrt(-z);
        return 2.0 / (X * X) * dawson_integral(X);
    }
    double sum = 1.0, term = 1.0;
    for (int n = 0; n < kMaxSeriesTerms; ++n) {
        term *= (n + 1.0) * z / ((n + 1.5) * (n + 2.0));
        if (std::abs(term) < tol * std::abs(sum)) return sum;
        sum += term;
        if (!std::isfinite(sum)) throw PrecisionError("hyp2f2: series overflow at z = " + fmt(z));
    }
    throw PrecisionError("hyp2f2: series did not converge within 10000 terms at z = " + fmt(z));
}

double sde_exit_time_p1(double T, std::int64_t d, double gamma, double delta) {
    check_threshold(T);
    if (d < 1) throw ConfigError("d must be at least 1");
    if (T > 0.1) warn("sde_exit_time_p1: the OU linearization is only meaningful for small T, got T = " + fmt(T));
    TaskParams P;
    P.d = d;
    P.p = 1;
    P.gamma = gamma;
    P.delta = delta;
    const LinearizedRates r = linearized_rates(P);
    if (!(r.sigma2 > 0.0)) throw DegenerateDiffusionError("sigma^2 = 0: the deterministic dynamics never leave m = 0");
    return T / r.sigma2 * hyp2f2(-r.mu * T / r.sigma2);
}

Trajectory linearized_trajectory(const OverlapState& initial, const TaskParams& params, double dt, double horizon) {
    if (!(dt > 0.0) || !(horizon >= 0.0)) throw ConfigError("linearized_trajectory: dt must be positive");
    const LinearizedRates r = linearized_rates(params);
    TrajectoryMeta meta;
    meta.params = params;
    meta.dt = dt;
    meta.scheme = "linearized";
    Trajectory traj(meta);
    const auto n = static_cast<std::size_t>(std::floor(horizon / dt + 1e-9));
    const int p = initial.width();
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = static_cast<double>(k) * dt;
        OverlapState s = initial;
        s.m *= std::exp(r.omega_M * t);
        const double decay = std::exp(-r.omega_Q * t);
        for (int j = 0; j < p; ++j)
            for (int l = 0; l < p; ++l)
                if (j != l) s.Q(j, l) *= decay;
        traj.append(t, s);
    }
    return traj;
}

nlohmann::json to_json(const ExitTimeRecord& record) {
    nlohmann::json j;
    j["mode"] = record.mode;
    j["p"] = record.p;
    j["d"] = record.d;
    j["gamma"] = record.gamma;
    j["delta"] = record.delta;
    j["T"] = record.T;
    j["t_ext"] = record.t_ext;
    j["se"] = record.se ? nlohmann::json(*record.se) : nlohmann::json(nullptr);
    j["method"] = record.method;
    j["warnings"] = record.warnings;
    return j;
}

}  // namespace medlab
