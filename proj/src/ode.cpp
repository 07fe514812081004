#include "medlab/ode.hpp"

#include "medlab/errors.hpp"
#include "medlab/moments.hpp"
#include "medlab/rng.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace medlab {
namespace {

OverlapState advance(const OverlapState& s, const OverlapRates& r, double h) {
    OverlapState out = s;
    out.a += h * r.da;
    out.m += h * r.dm;
    out.Q += h * r.dQ;
    return out;
}

Eigen::VectorXd residual_weights(const OverlapState& s) {
    const int p = s.width();
    Eigen::VectorXd c(p + 1);
    c.head(p) = -s.a / static_cast<double>(p);
    c(p) = 1.0;
    return c;
}

void check_admissible(const OverlapState& s, bool spherical, std::size_t step) {
    if (!s.a.allFinite() || !s.m.allFinite() || !s.Q.allFinite()) {
        throw IntegrationBlowupError(step, "non-finite overlaps");
    }
    for (int j = 0; j < s.width(); ++j) {
        const double bound = spherical ? 1.0 : std::sqrt(std::max(s.Q(j, j), 0.0) * s.rho);
        if (std::abs(s.m(j)) > bound + 1e-8) {
            std::ostringstream os;
            os << "|m_" << j << "| = " << std::abs(s.m(j)) << " exceeds " << bound;
            throw IntegrationBlowupError(step, os.str());
        }
    }
}

}  // namespace

Drift drift(const OverlapState& state, const TaskParams& params) {
    const int p = state.width();
    const OmegaMatrix omega = state.omega();
    const QuadraticFormMoments qm = quadratic_form_moments(omega, residual_weights(state));
    const Eigen::MatrixXd& om = omega.matrix();

    Drift out;
    out.da = params.train_a ? Eigen::VectorXd(qm.pair_times_form.diagonal().head(p)) : Eigen::VectorXd::Zero(p);
    out.psi = 2.0 * state.a.cwiseProduct(qm.pair_times_form.col(p).head(p));

    const Eigen::MatrixXd e_pair = qm.pair_times_form.topLeftCorner(p, p);
    const Eigen::MatrixXd e2_pair = qm.pair_times_form_squared.topLeftCorner(p, p) + params.delta * om.topLeftCorner(p, p);
    const double g = 4.0 * params.gamma / p;
    out.phi.resize(p, p);
    for (int j = 0; j < p; ++j) {
        for (int l = j; l < p; ++l) {
            const double v = 2.0 * (state.a(j) + state.a(l)) * e_pair(j, l) + g * state.a(j) * state.a(l) * e2_pair(j, l);
            out.phi(j, l) = v;
            out.phi(l, j) = v;
        }
    }
    return out;
}

OverlapRates matrix_drift_a1(const OverlapState& state, const TaskParams& params) {
    const int p = state.width();
    if ((state.a.array() != 1.0).any()) throw UnsupportedConfigError("matrix-form drift requires a_j = 1 for all j");
    const double pd = p;
    const double rho = state.rho;
    const Eigen::MatrixXd& Q = state.Q;
    const Eigen::VectorXd& m = state.m;
    const double tr = Q.trace();
    const Eigen::MatrixXd Q2 = Q * Q;
    const Eigen::MatrixXd mm = m * m.transpose();
    const double m2 = m.squaredNorm();

    OverlapRates out;
    out.da = Eigen::VectorXd::Zero(p);
    out.dm = 2.0 * (rho - tr / pd) * m + 4.0 * (rho * m - Q * m / pd);

    Eigen::MatrixXd block = 3.0 * rho * rho * Q + 12.0 * rho * mm;
    block += ((tr * tr + 2.0 * Q2.trace()) * Q + 4.0 * tr * Q2 + 8.0 * Q2 * Q) / (pd * pd);
    block -= (2.0 / pd) * ((rho * tr + 2.0 * m2) * Q + 2.0 * tr * mm + 2.0 * rho * Q2 + 4.0 * (mm * Q + Q * mm));
    block += params.delta * Q;

    out.dQ = 4.0 * (rho - tr / pd) * Q + 8.0 * (mm - Q2 / pd) + (4.0 * params.gamma / pd) * block;
    out.dQ = 0.5 * (out.dQ + out.dQ.transpose()).eval();
    return out;
}

OverlapRates spherical_project(const Eigen::VectorXd& psi, const Eigen::MatrixXd& phi, const OverlapState& state) {
    const int p = state.width();
    OverlapRates out;
    out.da = Eigen::VectorXd::Zero(p);
    out.dm.resize(p);
    out.dQ.resize(p, p);
    for (int j = 0; j < p; ++j) {
        out.dm(j) = psi(j) - 0.5 * state.m(j) * phi(j, j);
        out.dQ(j, j) = 0.0;
        for (int l = j + 1; l < p; ++l) {
            const double v = phi(j, l) - 0.5 * state.Q(j, l) * (phi(j, j) + phi(l, l));
            out.dQ(j, l) = v;
            out.dQ(l, j) = v;
        }
    }
    return out;
}

OverlapRates overlap_rates(const OverlapState& state, const TaskParams& params) {
    Drift dr = drift(state, params);
    if (params.spherical) {
        OverlapRates r = spherical_project(dr.psi, dr.phi, state);
        r.da = std::move(dr.da);
        return r;
    }
    return OverlapRates{std::move(dr.da), std::move(dr.psi), std::move(dr.phi)};
}

OdeScheme parse_ode_scheme(const std::string& name) {
    if (name == "euler") return OdeScheme::euler;
    if (name == "rk4") return OdeScheme::rk4;
    throw ConfigError("unknown ODE scheme '" + name + "' (expected euler or rk4)");
}

std::string to_string(OdeScheme scheme) { return scheme == OdeScheme::euler ? "euler" : "rk4"; }

OverlapState ode_step(const OverlapState& s, const TaskParams& params, double dt, OdeScheme scheme) {
    const OverlapRates k1 = overlap_rates(s, params);
    if (scheme == OdeScheme::euler) return advance(s, k1, dt);
    const OverlapRates k2 = overlap_rates(advance(s, k1, 0.5 * dt), params);
    const OverlapRates k3 = overlap_rates(advance(s, k2, 0.5 * dt), params);
    const OverlapRates k4 = overlap_rates(advance(s, k3, dt), params);
    OverlapRates sum;
    sum.da = k1.da + 2.0 * k2.da + 2.0 * k3.da + k4.da;
    sum.dm = k1.dm + 2.0 * k2.dm + 2.0 * k3.dm + k4.dm;
    sum.dQ = k1.dQ + 2.0 * k2.dQ + 2.0 * k3.dQ + k4.dQ;
    return advance(s, sum, dt / 6.0);
}

Trajectory integrate(const OverlapState& initial, const TaskParams& params, const OdeOptions& options) {
    if (!(options.dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(options.horizon > 0.0)) throw ConfigError("horizon must be positive");
    initial.validate(params.spherical);

    const auto n_steps = static_cast<std::size_t>(std::ceil(options.horizon / options.dt - 1e-9));
    const std::size_t stride = options.stride > 0 ? options.stride : default_stride(n_steps);

    Trajectory traj(TrajectoryMeta{params, options.dt, to_string(options.scheme), std::nullopt});
    OverlapState s = initial;
    if (params.spherical) {
        s.Q.diagonal().setOnes();
        s.rho = 1.0;
    }
    traj.append(0.0, s);
    for (std::size_t k = 1; k <= n_steps; ++k) {
        s = ode_step(s, params, options.dt, options.scheme);
        if (params.spherical) s.Q.diagonal().setOnes();
        check_admissible(s, params.spherical, k);
        if (k % stride == 0 || k == n_steps) traj.append(static_cast<double>(k) * options.dt, s);
    }
    return traj;
}

InitMode parse_init_mode(const std::string& name) {
    if (name == "gaussian-unconstrained") return InitMode::gaussian_unconstrained;
    if (name == "spherical-uniform") return InitMode::spherical_uniform;
    if (name == "orthogonal-exact") return InitMode::orthogonal_exact;
    throw ConfigError("unknown init mode '" + name + "'");
}

std::string to_string(InitMode mode) {
    switch (mode) {
        case InitMode::gaussian_unconstrained: return "gaussian-unconstrained";
        case InitMode::spherical_uniform: return "spherical-uniform";
        case InitMode::orthogonal_exact: return "orthogonal-exact";
    }
    return "unknown";
}

OverlapState init_overlaps(std::int64_t d, int p, InitMode mode, std::uint64_t seed, std::uint64_t stream) {
    if (p < 1) throw ConfigError("p must be positive");
    if (d <= p) throw IllConditionedInitError("init_overlaps requires d > p");
    if (mode == InitMode::orthogonal_exact) return OverlapState::orthogonal(p);

    NormalSource rng(seed, stream, StreamPurpose::init);
    const auto n = static_cast<Eigen::Index>(d);
    const double dd = static_cast<double>(d);
    auto draw = [&] {
        Eigen::VectorXd v(n);
        rng.fill({v.data(), static_cast<std::size_t>(n)});
        return v;
    };
    Eigen::VectorXd teacher = draw();
    teacher *= std::sqrt(dd) / teacher.norm();

    Eigen::MatrixXd W(p, n);
    for (int j = 0; j < p; ++j) {
        Eigen::VectorXd w = draw();
        if (mode == InitMode::spherical_uniform) w *= std::sqrt(dd) / w.norm();
        W.row(j) = w.transpose();
    }

    OverlapState s;
    s.a = Eigen::VectorXd::Ones(p);
    s.m = W * teacher / dd;
    s.Q = W * W.transpose() / dd;
    s.Q = 0.5 * (s.Q + s.Q.transpose()).eval();
    s.rho = 1.0;
    if (mode == InitMode::spherical_uniform) s.Q.diagonal().setOnes();
    return s;
}

}  // namespace medlab
