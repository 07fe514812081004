#pragma once

// Stochastic correction to the overlap dynamics at order sqrt(gamma/(p d)).
//
// Per SGD sample the overlaps move by (gamma/(p d)) times the random variables
//   M_j  = 2 a_j E lambda_j lambda_*
//   Q_jl = 2 (a_j + a_l) E lambda_j lambda_l + c a_j a_l E^2 lambda_j lambda_l
// with E the residual and c = 4 gamma/p (the value a literal SGD step produces).
// Their joint covariance, stacked as (M_1..M_p, Q_11, Q_12, .., Q_pp), drives a
// (p + p^2)-dimensional Brownian motion.

#include "medlab/ode.hpp"
#include "medlab/overlap.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace medlab {

inline constexpr int kMaxSdeWidth = 8;

/// Coefficient of the E^2 term of Q_jl. `sgd` uses 4 gamma/p, matching both the
/// drift and the exact per-sample increment. `published` uses 2 gamma/p, which
/// is the normalization behind the printed single-neuron covariance polynomials.
enum class NoiseConvention { sgd, published };

NoiseConvention parse_noise_convention(const std::string& name);
std::string to_string(NoiseConvention convention);

/// How the covariance entries are evaluated. Both are exact; `polynomial`
/// expands every product into Gaussian monomials (degree up to 12) and sums
/// pairings, `generating_function` differentiates the tilted Gaussian
/// E[exp(s q) lambda_a lambda_b lambda_c lambda_d] in s and is much faster.
enum class DiffusionMethod { polynomial, generating_function };

struct DiffusionCoeffs {
    int p = 0;
    Eigen::MatrixXd Sigma;  ///< covariance of the stacked variables
    Eigen::MatrixXd sigma;  ///< symmetric PSD square root of Sigma
    double clamped = 0.0;   ///< total magnitude of negative eigenvalues set to zero

    static int m_row(int j) { return j; }
    int q_row(int j, int l) const { return p + j * p + l; }
    int dim() const { return p + p * p; }
};

/// Throws UnsupportedConfigError unless every a_j = 1, SizeError above width 8.
DiffusionCoeffs diffusion_covariance(const OverlapState& state, const TaskParams& params,
                                     NoiseConvention convention = NoiseConvention::sgd,
                                     DiffusionMethod method = DiffusionMethod::polynomial);

/// Symmetric square root with negative eigenvalues clamped at zero. Warns when
/// the clamped magnitude exceeds 1e-6 of the trace.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& sigma, double* clamped = nullptr);

/// One Euler-Maruyama step. `drift` is the unconstrained drift of the same state;
/// spherical runs project both drift and noise rows onto the tangent space and
/// re-pin Q_jj = 1. Throws StepRejectedError if the result is inadmissible.
OverlapState em_step(const OverlapState& state, const TaskParams& params, const Drift& drift,
                     const DiffusionCoeffs& coeffs, double dt, const Eigen::VectorXd& noise);

struct SdeOptions {
    double dt = 0.0;  ///< 0 selects gamma/(p d), one SGD sample per step
    double horizon = 10.0;
    std::uint64_t seed = 0;
    std::uint64_t path = 0;  ///< stream index of this path within an ensemble
    std::size_t stride = 0;
    NoiseConvention convention = NoiseConvention::sgd;
};

/// Euler-Maruyama path. Rejected steps are retried with dt halved, up to three
/// consecutive halvings; after that the StepRejectedError propagates.
Trajectory integrate_sde(const OverlapState& initial, const TaskParams& params, const SdeOptions& options);

}  // namespace medlab
