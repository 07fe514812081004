#pragma once

// Deterministic high-dimensional limit of one-pass SGD on the overlaps.
//
// With the residual E = y - f = lambda_*^2 - (1/p) sum_s a_s lambda_s^2 + sqrt(Delta) z,
// the unconstrained drift in rescaled time t = nu gamma/(p d) is
//   da_j/dt  = E[E lambda_j^2]                                  (train_a only)
//   Psi_j    = 2 a_j E[E lambda_j lambda_*]
//   Phi_jl   = 2 (a_j + a_l) E[E lambda_j lambda_l] + (4 gamma/p) a_j a_l E[E^2 lambda_j lambda_l]

#include "medlab/overlap.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace medlab {

struct Drift {
    Eigen::VectorXd da;   ///< zero unless train_a
    Eigen::VectorXd psi;  ///< expected teacher-overlap displacement
    Eigen::MatrixXd phi;  ///< expected student-overlap displacement, symmetric
};

struct OverlapRates {
    Eigen::VectorXd da;
    Eigen::VectorXd dm;
    Eigen::MatrixXd dQ;
};

/// Unconstrained drift assembled from Gaussian moments of the joint fields.
Drift drift(const OverlapState& state, const TaskParams& params);

/// Closed matrix form of the unconstrained drift when every a_j = 1.
/// Throws UnsupportedConfigError otherwise.
OverlapRates matrix_drift_a1(const OverlapState& state, const TaskParams& params);

/// Tangent projection for weights constrained to the sphere of radius sqrt(d):
/// dm_j = Psi_j - (m_j/2) Phi_jj, dQ_jl = Phi_jl - (Q_jl/2)(Phi_jj + Phi_ll), dQ_jj = 0.
OverlapRates spherical_project(const Eigen::VectorXd& psi, const Eigen::MatrixXd& phi, const OverlapState& state);

/// drift followed by spherical_project when params.spherical.
OverlapRates overlap_rates(const OverlapState& state, const TaskParams& params);

enum class OdeScheme { euler, rk4 };

OdeScheme parse_ode_scheme(const std::string& name);
std::string to_string(OdeScheme scheme);

struct OdeOptions {
    double dt = 1e-3;
    double horizon = 10.0;
    OdeScheme scheme = OdeScheme::rk4;
    std::size_t stride = 0;  ///< 0 picks default_stride
};

/// Fixed-step integration. Spherical runs re-pin Q_jj = 1 after every step.
/// Throws IntegrationBlowupError when the state leaves the admissible region.
Trajectory integrate(const OverlapState& initial, const TaskParams& params, const OdeOptions& options);

/// One deterministic step of the chosen scheme (no re-pinning, no checks).
OverlapState ode_step(const OverlapState& state, const TaskParams& params, double dt, OdeScheme scheme);

enum class InitMode { gaussian_unconstrained, spherical_uniform, orthogonal_exact };

InitMode parse_init_mode(const std::string& name);
std::string to_string(InitMode mode);

/// Samples explicit weights in dimension d with a = 1 and measures (m, Q) exactly.
/// The teacher is uniform on the sphere of radius sqrt(d) (rho = 1).
/// Throws IllConditionedInitError when d <= p.
OverlapState init_overlaps(std::int64_t d, int p, InitMode mode, std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace medlab
