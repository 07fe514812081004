#pragma once

// Exit times from the mediocrity plateau: numeric threshold crossing on
// trajectories, linearized closed forms, the initial-overlap law and the
// Ornstein-Uhlenbeck escape time.

#include "medlab/overlap.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace medlab {

enum class ExitMode { annealed, quenched };

ExitMode parse_exit_mode(const std::string& name);
std::string to_string(ExitMode mode);

struct ExitTimeQuery {
    double T = 0.5;  ///< relative drop of the excess risk, in (0, 1)
    TaskParams params;
    ExitMode mode = ExitMode::annealed;
    std::size_t mc_samples = 100000;
    std::uint64_t seed = 0;
    std::optional<int> workers;

    void validate() const;
};

/// Rates of the dynamics linearized around the saddle m = 0, Q = I.
struct LinearizedRates {
    double omega_M = 0.0;  ///< 4[1 - (gamma/p)(1 + 1/p + 4/p^2 + Delta/2)]
    double omega_Q = 0.0;  ///< (8/p)(1 - 8 gamma/p^2)
    double mu = 0.0;       ///< 4(1 - 6 gamma) - 2 gamma Delta
    double sigma2 = 0.0;   ///< (gamma/(p d))(48 + 4 Delta)
};

LinearizedRates linearized_rates(const TaskParams& params);

struct MonteCarloMean {
    double mean = 0.0;
    double se = 0.0;
    std::size_t samples = 0;   ///< accepted draws
    std::size_t rejected = 0;  ///< draws with a non-positive log argument
};

/// First time the excess risk falls to (1 - T) of its initial value, linearly
/// interpolated between recorded points. Throws NoCrossingError with the final
/// excess-risk ratio if the level is never reached.
double exit_time_numeric(const Trajectory& traj, double T, double delta);

/// First time `values` reaches `level` from below (rising) or from above,
/// linearly interpolated. Returns nullopt when the level is never reached.
std::optional<double> crossing_time(const std::vector<double>& times, const std::vector<double>& values, double level,
                                    bool rising);

/// log[T d + (1 - T)] / (8(1 - 6 gamma) - 4 gamma Delta).
double annealed_exit_time_p1(double T, double d, double gamma, double delta);

/// Monte Carlo mean of log[T d / mu0 + (1 - T)] / (8(1 - 6 gamma) - 4 gamma Delta)
/// with mu0 = g^2, g ~ N(0, 1).
MonteCarloMean quenched_exit_time_p1(double T, double d, double gamma, double delta, std::size_t mc_samples,
                                     std::uint64_t seed, std::optional<int> workers = std::nullopt);

struct InitialOverlapSums {
    double mu0 = 0.0;   ///< d sum_j (u_j . v)^2
    double tau0 = 0.0;  ///< 2 d sum_{j<l} (u_j . u_l)^2
};

/// One draw of (mu0, tau0) for v, u_1..u_p independent and uniform on the unit
/// sphere of R^d. Uses the Bartlett factor of the (p+1)x(p+1) Gram matrix, so
/// the cost is O(p^3) independent of d.
InitialOverlapSums sample_Pdp(std::int64_t d, int p, std::uint64_t seed, std::uint64_t stream = 0);

/// Linearized crossing time for given initial sums:
/// log[(T p (p+1) d + (2 mu0 p - tau0)(1 - T)) / (2 mu0 p)] / (2 omega_M).
/// Returns nullopt when the log argument is not positive.
std::optional<double> exit_time_from_overlaps(double T, const TaskParams& params, double mu0, double tau0);

struct ExitTimeEstimate {
    double value = 0.0;
    std::optional<double> se;
    std::size_t samples = 0;
    std::size_t rejected = 0;
};

/// Annealed: log[(T(p+1)d + (p+1)(1-T))/(2p)] / (2 omega_M). Quenched: Monte
/// Carlo mean of exit_time_from_overlaps over sample_Pdp draws.
ExitTimeEstimate exit_time_general_p(const ExitTimeQuery& query);

/// p^3 / (8 + 2p + (2 + Delta) p^2).
double gamma_opt(int p, double delta);

/// Annealed number of SGD steps to exit, (p d / gamma) t_ext.
double steps_to_exit(double T, const TaskParams& params);

struct MinStepsAndGain {
    double s_min = 0.0;
    double gain_limit = 0.0;  ///< (12 + Delta)/(2 + Delta)
};

MinStepsAndGain min_steps_and_gain(int p, double d, double delta, double T);

/// 2F2(1, 1; 3/2, 2; z). The power series is summed until the next term is
/// below tol times the partial sum. For z < -10 the series cancels
/// catastrophically in double precision, so the identity
/// 2F2(1, 1; 3/2, 2; -X^2) = (2/X^2) int_0^X F(x) dx with F the Dawson function
/// is integrated instead.
double hyp2f2(double z, double tol = 1e-15);

/// Mean first exit of dm = mu m dt + sigma db from (-sqrt T, sqrt T) starting at
/// m = 0: (T/sigma^2) 2F2(1, 1; 3/2, 2; -mu T/sigma^2), with mu and sigma^2 of the
/// p = 1 linearization.
double sde_exit_time_p1(double T, std::int64_t d, double gamma, double delta);

/// m_j(t) = m_j(0) exp(omega_M t), Q_jl(t) = Q_jl(0) exp(-omega_Q t) for j != l,
/// recorded on the grid 0, dt, 2 dt, ... up to horizon.
Trajectory linearized_trajectory(const OverlapState& initial, const TaskParams& params, double dt, double horizon);

/// Result row for exit-time tables.
struct ExitTimeRecord {
    std::string mode;  ///< annealed, quenched or sde
    int p = 1;
    std::int64_t d = 0;
    double gamma = 0.0;
    double delta = 0.0;
    double T = 0.0;
    double t_ext = 0.0;
    std::optional<double> se;
    std::string method;  ///< formula or numeric
    std::vector<std::string> warnings;
};

nlohmann::json to_json(const ExitTimeRecord& record);

}  // namespace medlab
