#pragma once

// Flat key = value experiment configuration.
//
//   # comment
//   kind = sgd
//   p = 5
//   gamma = 0.1
//
// Unknown keys and malformed values raise ConfigError naming the key. Doubles
// are written with 17 significant digits, so write/parse round-trips exactly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace medlab {

enum class ExperimentKind { sgd, ode, sde, exit_table, width_sweep, second_layer_compare, landscape };

ExperimentKind parse_experiment_kind(const std::string& name);
std::string to_string(ExperimentKind kind);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::sgd;

    // task
    std::int64_t d = 3000;
    int p = 1;
    double gamma = 0.1;
    double delta = 0.1;
    double rho = 1.0;
    bool spherical = true;
    bool train_a = false;

    // initialization
    std::string init = "teacher-overlap";  ///< teacher-overlap, shared-random, per-member or orthogonal
    double m0 = 0.2;
    std::string second_init = "ones";

    // ensembles and seeds
    std::string engine = "overlap-chain";
    std::size_t members = 50;
    std::uint64_t seed = 1;
    int workers = 0;  ///< 0 defers to MEDLAB_WORKERS, then the core count

    // integration
    double dt = 1e-3;  ///< ODE step; for sde 0 selects gamma/(p d)
    double horizon = 5.0;
    std::string scheme = "rk4";
    std::string noise = "sgd";
    std::size_t records = 1000;  ///< records kept per trajectory

    // exit times
    double T = 0.3;
    std::string mode = "both";  ///< annealed, quenched or both
    std::size_t mc_samples = 100000;
    std::vector<int> p_list{1, 2, 4, 8};
    double gamma_over_p = 0.05;  ///< exit-table and second-layer: gamma = gamma_over_p * p when positive
    double level = 0.5;           ///< max-correlation crossing level

    // outputs
    bool compare_ode = true;
    bool write_members = true;
    std::filesystem::path out = "medlab-out";

    /// Throws ConfigError naming the first offending field.
    void validate() const;
};

/// Sets one field from its text form. Throws ConfigError for unknown keys or bad values.
void set_field(ExperimentConfig& config, const std::string& key, const std::string& value);

/// "key=value" form used by --set.
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// Every field as key -> text, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_fields(const ExperimentConfig& config);

std::string write_config(const ExperimentConfig& config);
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Defaults for a subcommand: ensemble sizes, horizons and T of the reference protocols.
ExperimentConfig default_config(ExperimentKind kind);

}  // namespace medlab
