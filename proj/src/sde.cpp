#include "medlab/sde.hpp"

#include "medlab/diagnostics.hpp"
#include "medlab/errors.hpp"
#include "medlab/moments.hpp"
#include "medlab/rng.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <functional>
#include <cmath>
#include <sstream>
#include <vector>

namespace medlab {
namespace {

/// One summand c * E^power * lambda_a * lambda_b of a displacement variable.
struct Term {
    double coef;
    int power;
    int a;
    int b;
};

std::vector<std::vector<Term>> displacement_terms(const OverlapState& s, double e2_coef) {
    const int p = s.width();
    std::vector<std::vector<Term>> vars;
    vars.reserve(static_cast<std::size_t>(p + p * p));
    for (int j = 0; j < p; ++j) vars.push_back({{2.0 * s.a(j), 1, j, p}});
    for (int j = 0; j < p; ++j) {
        for (int l = 0; l < p; ++l) {
            vars.push_back({{2.0 * (s.a(j) + s.a(l)), 1, j, l}, {e2_coef * s.a(j) * s.a(l), 2, j, l}});
        }
    }
    return vars;
}

Eigen::VectorXd residual_weights(const OverlapState& s) {
    const int p = s.width();
    Eigen::VectorXd c(p + 1);
    c.head(p) = -s.a / static_cast<double>(p);
    c(p) = 1.0;
    return c;
}

constexpr int kOrder = 4;
using Series = std::array<double, kOrder + 1>;

Series mul(const Series& x, const Series& y) {
    Series out{};
    for (int i = 0; i <= kOrder; ++i)
        for (int j = 0; j + i <= kOrder; ++j) out[i + j] += x[i] * y[j];
    return out;
}

Series add(Series x, const Series& y) {
    for (int i = 0; i <= kOrder; ++i) x[i] += y[i];
    return x;
}

/// E[exp(s q) f(lambda)] = N(s) E_{Omega_s}[f] with q = lambda^T C lambda,
/// Omega_s = Omega (I - 2 s C Omega)^{-1} and N(s) = det(I - 2 s C Omega)^{-1/2},
/// both expanded to order four in s.
class TiltedGaussian {
public:
    TiltedGaussian(const Eigen::MatrixXd& omega, const Eigen::VectorXd& weights) : n_(static_cast<int>(omega.rows())) {
        const Eigen::MatrixXd A = weights.asDiagonal() * omega;
        std::array<Eigen::MatrixXd, kOrder + 1> om_pow;
        om_pow[0] = omega;
        Eigen::MatrixXd apow = Eigen::MatrixXd::Identity(n_, n_);
        Series log_norm{};
        for (int k = 1; k <= kOrder; ++k) {
            apow = apow * A;
            om_pow[k] = omega * apow;
            log_norm[k] = 0.5 * std::pow(2.0, k) * apow.trace() / k;
        }
        norm_ = Series{};
        norm_[0] = 1.0;
        for (int k = 1; k <= kOrder; ++k) {
            double acc = 0.0;
            for (int j = 1; j <= k; ++j) acc += j * log_norm[j] * norm_[k - j];
            norm_[k] = acc / k;
        }
        tilted_.resize(static_cast<std::size_t>(n_ * n_));
        for (int a = 0; a < n_; ++a) {
            for (int b = 0; b < n_; ++b) {
                Series& s = tilted_[static_cast<std::size_t>(a * n_ + b)];
                for (int k = 0; k <= kOrder; ++k) s[k] = std::pow(2.0, k) * om_pow[k](a, b);
            }
        }
    }

    /// E[q^r lambda_a lambda_b].
    double pair(int r, int a, int b) const { return factorial(r) * mul(norm_, at(a, b))[r]; }

    /// E[q^r lambda_a lambda_b lambda_c lambda_d].
    double quad(int r, int a, int b, int c, int d) const {
        const Series w = add(add(mul(at(a, b), at(c, d)), mul(at(a, c), at(b, d))), mul(at(a, d), at(b, c)));
        return factorial(r) * mul(norm_, w)[r];
    }

private:
    static double factorial(int r) {
        double f = 1.0;
        for (int i = 2; i <= r; ++i) f *= i;
        return f;
    }
    const Series& at(int a, int b) const { return tilted_[static_cast<std::size_t>(a * n_ + b)]; }

    int n_;
    Series norm_{};
    std::vector<Series> tilted_;
};

double binomial(int n, int k) {
    double out = 1.0;
    for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
    return out;
}

double double_factorial_odd(int k) {  // (k-1)!! for even k
    double out = 1.0;
    for (int i = k - 1; i > 1; i -= 2) out *= i;
    return out;
}

/// E[E^n g] for g = lambda_a lambda_b (or a four-fold product) with E = q + sqrt(Delta) z.
template <class Moment>
double residual_power_moment(int n, double delta, Moment&& moment_of_q_power) {
    double out = 0.0;
    for (int k = 0; k <= n; k += 2) out += binomial(n, k) * std::pow(delta, k / 2) * double_factorial_odd(k) * moment_of_q_power(n - k);
    return out;
}

Eigen::MatrixXd covariance_generating(const OverlapState& s, const TaskParams& params, double e2_coef) {
    const auto vars = displacement_terms(s, e2_coef);
    const TiltedGaussian tg(s.omega().matrix(), residual_weights(s));
    const double delta = params.delta;
    const auto n = static_cast<int>(vars.size());

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    for (int v = 0; v < n; ++v) {
        for (const Term& t : vars[static_cast<std::size_t>(v)]) {
            mean(v) += t.coef * residual_power_moment(t.power, delta, [&](int r) { return tg.pair(r, t.a, t.b); });
        }
    }
    Eigen::MatrixXd cov(n, n);
    for (int v = 0; v < n; ++v) {
        for (int w = v; w < n; ++w) {
            double second = 0.0;
            for (const Term& t : vars[static_cast<std::size_t>(v)]) {
                for (const Term& u : vars[static_cast<std::size_t>(w)]) {
                    second += t.coef * u.coef * residual_power_moment(t.power + u.power, delta, [&](int r) {
                                  return tg.quad(r, t.a, t.b, u.a, u.b);
                              });
                }
            }
            cov(v, w) = cov(w, v) = second - mean(v) * mean(w);
        }
    }
    return cov;
}

Eigen::MatrixXd covariance_polynomial(const OverlapState& s, const TaskParams& params, double e2_coef) {
    const int p = s.width();
    const OmegaMatrix om = s.omega().with_noise_field();
    MomentCache cache(om);

    FieldPolynomial e = FieldPolynomial::monomial(1.0, {p, p});
    for (int j = 0; j < p; ++j) e += FieldPolynomial::monomial(-s.a(j) / p, {j, j});
    e += FieldPolynomial::monomial(std::sqrt(params.delta), {p + 1});
    const FieldPolynomial e2 = e * e;

    std::vector<FieldPolynomial> vars;
    for (const auto& terms : displacement_terms(s, e2_coef)) {
        FieldPolynomial v;
        for (const Term& t : terms) v += (t.power == 1 ? e : e2) * FieldPolynomial::monomial(t.coef, {t.a, t.b});
        vars.push_back(std::move(v));
    }
    const auto n = static_cast<int>(vars.size());
    Eigen::VectorXd mean(n);
    for (int v = 0; v < n; ++v) mean(v) = displacement_moment(vars[static_cast<std::size_t>(v)], cache);
    Eigen::MatrixXd cov(n, n);
    for (int v = 0; v < n; ++v) {
        for (int w = v; w < n; ++w) {
            const double second = displacement_moment(vars[static_cast<std::size_t>(v)] * vars[static_cast<std::size_t>(w)], cache);
            cov(v, w) = cov(w, v) = second - mean(v) * mean(w);
        }
    }
    return cov;
}

bool admissible(const OverlapState& s, bool spherical) {
    if (!s.m.allFinite() || !s.Q.allFinite()) return false;
    const int p = s.width();
    for (int j = 0; j < p; ++j) {
        if (spherical) {
            if (std::abs(s.m(j)) > 1.0) return false;
            for (int l = j + 1; l < p; ++l)
                if (std::abs(s.Q(j, l)) > 1.0) return false;
        } else {
            if (s.Q(j, j) <= 0.0 || s.m(j) * s.m(j) > s.Q(j, j) * s.rho) return false;
        }
    }
    return true;
}

}  // namespace

NoiseConvention parse_noise_convention(const std::string& name) {
    if (name == "sgd") return NoiseConvention::sgd;
    if (name == "published") return NoiseConvention::published;
    throw ConfigError("unknown noise convention '" + name + "' (expected sgd or published)");
}

std::string to_string(NoiseConvention convention) { return convention == NoiseConvention::sgd ? "sgd" : "published"; }

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& sigma, double* clamped) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sigma + sigma.transpose()));
    Eigen::VectorXd vals = eig.eigenvalues();
    double neg = 0.0;
    for (Eigen::Index i = 0; i < vals.size(); ++i) {
        if (vals(i) < 0.0) {
            neg += -vals(i);
            vals(i) = 0.0;
        }
    }
    const double trace = std::max(sigma.trace(), 0.0);
    if (neg > 1e-6 * trace) {
        std::ostringstream os;
        os << "diffusion covariance clamped by " << neg << " (trace " << trace << ")";
        warn(os.str());
    }
    if (clamped != nullptr) *clamped = neg;
    Eigen::MatrixXd root = eig.eigenvectors() * vals.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (root + root.transpose());
}

DiffusionCoeffs diffusion_covariance(const OverlapState& state, const TaskParams& params, NoiseConvention convention,
                                     DiffusionMethod method) {
    const int p = state.width();
    if (p > kMaxSdeWidth) {
        throw SizeError("diffusion covariance supports width up to " + std::to_string(kMaxSdeWidth) + ", got " +
                        std::to_string(p));
    }
    if ((state.a.array() != 1.0).any()) throw UnsupportedConfigError("diffusion covariance requires a_j = 1");
    const double e2_coef = (convention == NoiseConvention::sgd ? 4.0 : 2.0) * params.gamma / p;

    DiffusionCoeffs out;
    out.p = p;
    out.Sigma = method == DiffusionMethod::polynomial ? covariance_polynomial(state, params, e2_coef)
                                                      : covariance_generating(state, params, e2_coef);
    out.sigma = psd_sqrt(out.Sigma, &out.clamped);
    return out;
}

OverlapState em_step(const OverlapState& state, const TaskParams& params, const Drift& drift,
                     const DiffusionCoeffs& coeffs, double dt, const Eigen::VectorXd& noise) {
    const int p = state.width();
    if (noise.size() != coeffs.dim()) throw InvalidStateError("noise vector must have length p + p^2");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");

    const OverlapRates r = params.spherical ? spherical_project(drift.psi, drift.phi, state)
                                            : OverlapRates{drift.da, drift.psi, drift.phi};
    OverlapState out = state;
    out.a += dt * r.da;
    out.m += dt * r.dm;
    out.Q += dt * r.dQ;

    const Eigen::VectorXd xi = std::sqrt(params.time_per_step() * dt) * (coeffs.sigma * noise);
    for (int j = 0; j < p; ++j) {
        double dm = xi(DiffusionCoeffs::m_row(j));
        if (params.spherical) dm -= 0.5 * state.m(j) * xi(coeffs.q_row(j, j));
        out.m(j) += dm;
        for (int l = j; l < p; ++l) {
            double dq = xi(coeffs.q_row(j, l));
            if (params.spherical) {
                if (l == j) continue;
                dq -= 0.5 * state.Q(j, l) * (xi(coeffs.q_row(j, j)) + xi(coeffs.q_row(l, l)));
            }
            out.Q(j, l) += dq;
            out.Q(l, j) = out.Q(j, l);
        }
    }
    if (params.spherical) out.Q.diagonal().setOnes();
    if (!admissible(out, params.spherical)) throw StepRejectedError("Euler-Maruyama step left the admissible region");
    return out;
}

Trajectory integrate_sde(const OverlapState& initial, const TaskParams& params, const SdeOptions& options) {
    if (params.train_a) throw UnsupportedConfigError("the SDE is defined for a fixed second layer");
    if (!(options.horizon > 0.0)) throw ConfigError("horizon must be positive");
    initial.validate(params.spherical);
    const double dt = options.dt > 0.0 ? options.dt : params.time_per_step();
    const auto n_steps = static_cast<std::size_t>(std::ceil(options.horizon / dt - 1e-9));
    const std::size_t stride = options.stride > 0 ? options.stride : default_stride(n_steps);

    NormalSource rng(options.seed, options.path, StreamPurpose::sde_noise);
    const int dim = initial.width() + initial.width() * initial.width();
    Eigen::VectorXd noise(dim);

    auto attempt = [&](const OverlapState& s, double h) {
        const Drift dr = drift(s, params);
        const DiffusionCoeffs co = diffusion_covariance(s, params, options.convention, DiffusionMethod::generating_function);
        rng.fill({noise.data(), static_cast<std::size_t>(dim)});
        return em_step(s, params, dr, co, h, noise);
    };
    std::function<OverlapState(const OverlapState&, double, int)> step = [&](const OverlapState& s, double h, int depth) {
        try {
            return attempt(s, h);
        } catch (const StepRejectedError&) {
            if (depth == 3) throw;
            const OverlapState half = step(s, 0.5 * h, depth + 1);
            return step(half, 0.5 * h, depth + 1);
        }
    };

    Trajectory traj(TrajectoryMeta{params, dt, "euler-maruyama", options.seed});
    OverlapState s = initial;
    if (params.spherical) {
        s.Q.diagonal().setOnes();
        s.rho = 1.0;
    }
    traj.append(0.0, s);
    for (std::size_t k = 1; k <= n_steps; ++k) {
        s = step(s, dt, 0);
        if (k % stride == 0 || k == n_steps) traj.append(static_cast<double>(k) * dt, s);
    }
    return traj;
}

}  // namespace medlab
