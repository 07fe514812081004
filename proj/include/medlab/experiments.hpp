#pragma once

// Experiment runners behind the command-line tool. Each run writes its
// artifacts into config.out together with config.txt (the flat config that
// reproduces the run) and manifest.json (config, seeds, version, file list and
// any diverged ensemble members).

#include "medlab/config.hpp"
#include "medlab/ensemble.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace medlab {

std::string version();

enum class RunStatus { ok, diverged, no_crossing };

std::string to_string(RunStatus status);

/// 0 ok, 3 diverged, 4 no crossing.
int exit_code(RunStatus status);

struct ExperimentResult {
    RunStatus status = RunStatus::ok;
    nlohmann::json summary;
    std::vector<std::string> files;  ///< relative to config.out, manifest.json last
    std::vector<MemberFailure> failures;
    std::vector<std::string> warnings;
};

/// Validates the config (ConfigError on failure), runs it and writes the artifacts.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// The TaskParams a config describes. For exit-table, width-sweep and
/// second-layer-compare, gamma is gamma_over_p * p when gamma_over_p > 0.
TaskParams task_params(const ExperimentConfig& config, int p);

/// Initial overlaps of a single-trajectory run (ode, sde, shared sgd).
OverlapState initial_state(const ExperimentConfig& config, const TaskParams& params);

/// Pointwise |mean - reference| / se over the comparison window, which ends at
/// the first record where the reference excess risk is within 10% of its final
/// value. Points where both the difference and se are at rounding level (a shared
/// start) are skipped.
struct BandComparison {
    double max_z = 0.0;
    double t_at_max = 0.0;
    std::size_t points = 0;
    std::size_t over = 0;  ///< points with z above `band`
    double window_end = 0.0;
};

BandComparison compare_to_reference(const SeriesStats& stats, const std::vector<double>& reference, double delta,
                                    double band);

struct SelftestCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Fast consistency checks at desk scale (a few seconds in total).
std::vector<SelftestCheck> run_selftest(std::uint64_t seed, std::optional<int> workers);

/// Writes selftest.json, config.txt and manifest.json into `out`.
void write_selftest(const std::filesystem::path& out, const std::vector<SelftestCheck>& checks, std::uint64_t seed);

}  // namespace medlab
