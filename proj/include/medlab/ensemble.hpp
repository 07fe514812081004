#pragma once

// Ensembles of independent SGD runs or SDE paths and their seed-ordered statistics.
//
// Member k of an ensemble with base seed s draws its data (or noise) from stream
// k of seed s, and, for per-member initializations, its teacher and student from
// stream k as well. Members run in parallel; results are stored and reduced in
// member order, so every statistic is independent of the worker count.

#include "medlab/ode.hpp"
#include "medlab/overlap.hpp"
#include "medlab/sde.hpp"
#include "medlab/sgd.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace medlab {

/// Per-point mean and standard error (sample standard deviation over sqrt(n)).
struct SeriesStats {
    std::vector<double> x;
    std::vector<double> mean;
    std::vector<double> se;
    std::size_t members = 0;
};

/// rows[k] is the series of member k, all of the same length as x.
/// A single member gives se = 0.
SeriesStats reduce_series(const std::vector<double>& x, const std::vector<std::vector<double>>& rows);

struct ScalarStats {
    double mean = 0.0;
    double se = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

ScalarStats reduce_scalars(const std::vector<double>& values);

/// max_j |m_j| at every record.
std::vector<double> max_correlation_diagnostic(const Trajectory& traj);

/// Linear interpolation of y(x) on increasing x. Throws ConfigError outside
/// [x.front(), x.back()].
double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at);

/// Trajectory risk interpolated at the given times.
std::vector<double> risk_at(const Trajectory& traj, const std::vector<double>& times);

enum class SgdEngine { overlap_chain, explicit_weights };

SgdEngine parse_sgd_engine(const std::string& name);
std::string to_string(SgdEngine engine);

/// How ensemble members are initialized.
///  - teacher_overlap: one network with every m_j = m0, shared by all members
///  - shared_random: one random network shared by all members
///  - per_member: an independent random network (and teacher) per member
enum class EnsembleInit { teacher_overlap, shared_random, per_member };

EnsembleInit parse_ensemble_init(const std::string& name);
std::string to_string(EnsembleInit init);

struct SgdEnsembleSpec {
    TaskParams params;
    std::size_t members = 50;
    std::uint64_t seed = 0;
    std::size_t n_steps = 0;
    std::size_t stride = 0;  ///< 0 picks default_stride(n_steps, 1000)
    SgdEngine engine = SgdEngine::overlap_chain;
    EnsembleInit init = EnsembleInit::per_member;
    double m0 = 0.1;
    SecondLayerInit second = SecondLayerInit::ones;
    /// Overrides `init` with a fixed overlap state (overlap-chain engine only).
    std::optional<OverlapState> initial_state;
    std::optional<int> workers;
};

struct MemberFailure {
    std::size_t member = 0;
    std::string kind;  ///< divergence, integration-blowup or step-rejected
    std::string what;
};

struct Ensemble {
    std::vector<std::size_t> members;  ///< indices of the completed runs, increasing
    std::vector<Trajectory> runs;
    std::vector<MemberFailure> failures;
};

/// Initial overlaps of member k (identical for all k unless per_member).
OverlapState ensemble_initial_state(const SgdEnsembleSpec& spec, std::size_t member);

/// Runs every member; DivergenceError in a member is recorded as a failure and
/// the remaining members are kept.
Ensemble run_sgd_ensemble(const SgdEnsembleSpec& spec);

struct SdeEnsembleSpec {
    TaskParams params;
    OverlapState initial;
    std::size_t members = 100;
    std::uint64_t seed = 0;
    SdeOptions options;  ///< seed and path are set per member
    std::optional<int> workers;
};

/// StepRejectedError and IntegrationBlowupError in a member are recorded as failures.
Ensemble run_sde_ensemble(const SdeEnsembleSpec& spec);

/// Seed-ordered mean and se of the risk over completed runs. All runs must
/// share record times.
SeriesStats risk_stats(const Ensemble& ensemble);

/// Seed-ordered mean and se of max_j |m_j| over completed runs.
SeriesStats max_correlation_stats(const Ensemble& ensemble);

}  // namespace medlab
