#include "medlab/config.hpp"
#include "medlab/errors.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>

using namespace medlab;

namespace {

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("kind names") {
    for (ExperimentKind k : {ExperimentKind::sgd, ExperimentKind::ode, ExperimentKind::sde, ExperimentKind::exit_table,
                             ExperimentKind::width_sweep, ExperimentKind::second_layer_compare, ExperimentKind::landscape})
        CHECK(parse_experiment_kind(to_string(k)) == k);
    CHECK(parse_experiment_kind("exit-time") == ExperimentKind::exit_table);
    CHECK_THROWS_AS(parse_experiment_kind("train"), ConfigError);
}

TEST_CASE("write and parse round trip") {
    ExperimentConfig c = default_config(ExperimentKind::exit_table);
    c.gamma = 0.1 + 0.2;
    c.m0 = 1.0 / 3.0;
    c.p_list = {1, 3, 9};
    c.seed = 18446744073709551615ull;
    c.spherical = false;
    c.out = "runs/a b";
    const ExperimentConfig back = parse_config(write_config(c));
    CHECK(config_fields(back) == config_fields(c));
    CHECK(back.gamma == c.gamma);
    CHECK(back.m0 == c.m0);
    CHECK(back.seed == c.seed);
}

TEST_CASE("comments, blanks and overrides") {
    const ExperimentConfig c = parse_config("# run\n\nkind = ode\n  p = 3   \ngamma=0.05\n");
    CHECK(c.kind == ExperimentKind::ode);
    CHECK(c.p == 3);
    CHECK(c.gamma == 0.05);
    ExperimentConfig d = c;
    apply_override(d, "delta=0.25");
    apply_override(d, "p_list=2,4");
    CHECK(d.delta == 0.25);
    CHECK(d.p_list == std::vector<int>{2, 4});
}

TEST_CASE("errors name the key") {
    ExperimentConfig c;
    CHECK(error_of([&] { set_field(c, "gama", "0.1"); }).find("'gama'") != std::string::npos);
    CHECK(error_of([&] { set_field(c, "gamma", "fast"); }).find("gamma") != std::string::npos);
    CHECK(error_of([&] { set_field(c, "p", "2.5"); }).find("p") != std::string::npos);
    CHECK(error_of([&] { set_field(c, "spherical", "maybe"); }).find("spherical") != std::string::npos);
    CHECK(error_of([&] { apply_override(c, "gamma"); }).find("gamma") != std::string::npos);
    CHECK(error_of([&] { parse_config("p = 2\nbogus = 1\n"); }).find("'bogus'") != std::string::npos);
}

TEST_CASE("validation names the field") {
    const auto invalid = [](auto edit) {
        ExperimentConfig c;
        edit(c);
        return error_of([&] { c.validate(); });
    };
    CHECK(invalid([](ExperimentConfig&) {}).empty());
    CHECK(invalid([](ExperimentConfig& c) { c.T = 1.5; }).find("invalid T") == 0);
    CHECK(invalid([](ExperimentConfig& c) { c.p = 0; }).find("invalid p") == 0);
    CHECK(invalid([](ExperimentConfig& c) { c.gamma = -1.0; }).find("invalid gamma") == 0);
    CHECK(invalid([](ExperimentConfig& c) { c.members = 0; }).find("invalid members") == 0);
    CHECK(invalid([](ExperimentConfig& c) { c.init = "zeros"; }).find("invalid init") == 0);
    CHECK(invalid([](ExperimentConfig& c) {
              c.kind = ExperimentKind::sde;
              c.p = 9;
          }).find("invalid p") == 0);
    CHECK(invalid([](ExperimentConfig& c) {
              c.kind = ExperimentKind::ode;
              c.init = "per-member";
          }).find("invalid init") == 0);
}

TEST_CASE("loading config files and manifests") {
    const auto dir = std::filesystem::temp_directory_path() / "medlab_test_config";
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "run.txt");
        os << "kind = sde\nmembers = 7\n";
    }
    const ExperimentConfig a = load_config(dir / "run.txt");
    CHECK(a.kind == ExperimentKind::sde);
    CHECK(a.members == 7);
    {
        std::ofstream os(dir / "manifest.json");
        os << R"({"tool": "medlab", "config": {"kind": "ode", "horizon": "2.5"}})";
    }
    const ExperimentConfig b = load_config(dir / "manifest.json");
    CHECK(b.kind == ExperimentKind::ode);
    CHECK(b.horizon == 2.5);
    CHECK_THROWS_AS(load_config(dir / "missing.txt"), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("subcommand defaults") {
    CHECK(default_config(ExperimentKind::sde).members == 100);
    const ExperimentConfig e = default_config(ExperimentKind::exit_table);
    CHECK(e.delta == 0.0);
    CHECK(e.init == "per-member");
    CHECK(default_config(ExperimentKind::second_layer_compare).p == 20);
    for (ExperimentKind k : {ExperimentKind::sgd, ExperimentKind::ode, ExperimentKind::sde, ExperimentKind::exit_table,
                             ExperimentKind::width_sweep, ExperimentKind::second_layer_compare, ExperimentKind::landscape})
        CHECK_NOTHROW(default_config(k).validate());
}
