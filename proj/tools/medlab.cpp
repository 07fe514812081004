// medlab command-line tool.
//
// Exit codes: 0 success, 1 failed selftest or internal error, 2 config error,
// 3 numeric divergence, 4 no threshold crossing.

#include "medlab/config.hpp"
#include "medlab/errors.hpp"
#include "medlab/experiments.hpp"
#include "medlab/parallel.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct CommonFlags {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "flat key = value config file, or a manifest.json to re-run");
    cmd->add_option("--set", f.sets, "override one config key (key=value, repeatable)");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--seed", f.seed, "base seed");
    cmd->add_option("--workers", f.workers, "worker threads (default MEDLAB_WORKERS, then the core count)");
}

medlab::ExperimentConfig build_config(medlab::ExperimentKind kind, const CommonFlags& f) {
    medlab::ExperimentConfig c = medlab::default_config(kind);
    if (!f.config.empty()) {
        c = medlab::load_config(f.config, c);
        if (c.kind != kind)
            throw medlab::ConfigError("invalid kind: config file describes " + medlab::to_string(c.kind) +
                                      " but the subcommand runs " + medlab::to_string(kind));
    }
    for (const std::string& s : f.sets) medlab::apply_override(c, s);
    if (c.kind != kind) throw medlab::ConfigError("invalid kind: cannot be changed with --set");
    if (!f.out.empty()) c.out = f.out;
    if (f.seed) c.seed = *f.seed;
    if (f.workers) {
        if (*f.workers < 1) throw medlab::ConfigError("invalid workers: must be at least 1");
        c.workers = *f.workers;
    }
    return c;
}

int run(medlab::ExperimentKind kind, const CommonFlags& f) {
    const medlab::ExperimentConfig c = build_config(kind, f);
    if (c.workers == 0) (void)medlab::resolve_workers();  // rejects a malformed MEDLAB_WORKERS early
    const medlab::ExperimentResult r = medlab::run_experiment(c);
    for (const std::string& w : r.warnings) std::cerr << "medlab: warning: " << w << '\n';
    for (const medlab::MemberFailure& m : r.failures)
        std::cerr << "medlab: member " << m.member << " " << m.kind << ": " << m.what << '\n';
    std::cout << "medlab " << medlab::to_string(c.kind) << ": " << medlab::to_string(r.status) << ", "
              << r.files.size() << " files in " << c.out.string() << '\n';
    return medlab::exit_code(r.status);
}

int selftest(const CommonFlags& f) {
    if (!f.config.empty() || !f.sets.empty()) throw medlab::ConfigError("invalid config: selftest takes no config");
    if (f.workers && *f.workers < 1) throw medlab::ConfigError("invalid workers: must be at least 1");
    const std::uint64_t seed = f.seed.value_or(1);
    const auto checks = medlab::run_selftest(seed, f.workers);
    bool all = true;
    for (const auto& c : checks) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
        all = all && c.passed;
    }
    if (!f.out.empty()) medlab::write_selftest(f.out, checks, seed);
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Escape-time experiments for one-pass SGD on phase retrieval"};
    app.set_version_flag("--version", medlab::version());
    app.require_subcommand(1);

    struct Entry {
        const char* name;
        const char* help;
        std::optional<medlab::ExperimentKind> kind;
    };
    const std::vector<Entry> entries = {
        {"sgd", "SGD ensemble, optionally against the ODE", medlab::ExperimentKind::sgd},
        {"ode", "integrate the deterministic overlap dynamics", medlab::ExperimentKind::ode},
        {"sde", "Euler-Maruyama ensemble of the overlap SDE", medlab::ExperimentKind::sde},
        {"exit-time", "exit-time table: formulas and measured SGD exit times over p_list", medlab::ExperimentKind::exit_table},
        {"width-sweep", "optimal learning rate, minimal steps and overparameterization gain over p_list",
         medlab::ExperimentKind::width_sweep},
        {"second-layer", "max-correlation growth with a fixed and a trained second layer",
         medlab::ExperimentKind::second_layer_compare},
        {"landscape", "critical points of the single-neuron population risk", medlab::ExperimentKind::landscape},
        {"selftest", "fast consistency checks", std::nullopt},
    };
    std::vector<CommonFlags> flags(entries.size());
    std::vector<CLI::App*> cmds;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        cmds.push_back(app.add_subcommand(entries[k].name, entries[k].help));
        add_common(cmds.back(), flags[k]);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (std::size_t k = 0; k < entries.size(); ++k) {
            if (!cmds[k]->parsed()) continue;
            if (!entries[k].kind) return selftest(flags[k]);
            return run(*entries[k].kind, flags[k]);
        }
    } catch (const medlab::ConfigError& e) {
        std::cerr << "medlab: config error: " << e.what() << '\n';
        return 2;
    } catch (const medlab::UnstableRateError& e) {
        std::cerr << "medlab: config error: " << e.what() << '\n';
        return 2;
    } catch (const medlab::UnsupportedConfigError& e) {
        std::cerr << "medlab: config error: " << e.what() << '\n';
        return 2;
    } catch (const medlab::SizeError& e) {
        std::cerr << "medlab: config error: " << e.what() << '\n';
        return 2;
    } catch (const medlab::IllConditionedInitError& e) {
        std::cerr << "medlab: config error: " << e.what() << '\n';
        return 2;
    } catch (const medlab::DivergenceError& e) {
        std::cerr << "medlab: divergence: " << e.what() << '\n';
        return 3;
    } catch (const medlab::IntegrationBlowupError& e) {
        std::cerr << "medlab: divergence: " << e.what() << '\n';
        return 3;
    } catch (const medlab::StepRejectedError& e) {
        std::cerr << "medlab: divergence: " << e.what() << '\n';
        return 3;
    } catch (const medlab::NoCrossingError& e) {
        std::cerr << "medlab: no crossing: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "medlab: error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
