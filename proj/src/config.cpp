#include "medlab/config.hpp"

#include "medlab/errors.hpp"
#include "medlab/io.hpp"
#include "medlab/sde.hpp"

#include <json.hpp>

#include <fstream>
#include <functional>
#include <sstream>

namespace medlab {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    bad(key, v, "a number");
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    bad(key, v, "an integer");
}

std::size_t to_count(const std::string& key, const std::string& v) {
    const long long x = to_int(key, v);
    if (x < 0) bad(key, v, "a non-negative integer");
    return static_cast<std::size_t>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        if (!v.empty() && v.front() != '-') {
            const unsigned long long x = std::stoull(v, &used);
            if (used == v.size()) return x;
        }
    } catch (const std::exception&) {
    }
    bad(key, v, "a non-negative integer");
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad(key, v, "true or false");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) out.push_back(static_cast<int>(to_int(key, trim(item))));
    if (out.empty()) bad(key, v, "a comma-separated list of integers");
    return out;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

struct Field {
    const char* key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"kind", [](auto& c, const auto& v) { c.kind = parse_experiment_kind(v); }, [](const auto& c) { return to_string(c.kind); }},
        {"d", [](auto& c, const auto& v) { c.d = to_int("d", v); }, [](const auto& c) { return std::to_string(c.d); }},
        {"p", [](auto& c, const auto& v) { c.p = static_cast<int>(to_int("p", v)); }, [](const auto& c) { return std::to_string(c.p); }},
        {"gamma", [](auto& c, const auto& v) { c.gamma = to_double("gamma", v); }, [](const auto& c) { return format_double(c.gamma); }},
        {"delta", [](auto& c, const auto& v) { c.delta = to_double("delta", v); }, [](const auto& c) { return format_double(c.delta); }},
        {"rho", [](auto& c, const auto& v) { c.rho = to_double("rho", v); }, [](const auto& c) { return format_double(c.rho); }},
        {"spherical", [](auto& c, const auto& v) { c.spherical = to_bool("spherical", v); }, [](const auto& c) { return bool_text(c.spherical); }},
        {"train_a", [](auto& c, const auto& v) { c.train_a = to_bool("train_a", v); }, [](const auto& c) { return bool_text(c.train_a); }},
        {"init", [](auto& c, const auto& v) { c.init = v; }, [](const auto& c) { return c.init; }},
        {"m0", [](auto& c, const auto& v) { c.m0 = to_double("m0", v); }, [](const auto& c) { return format_double(c.m0); }},
        {"second_init", [](auto& c, const auto& v) { c.second_init = v; }, [](const auto& c) { return c.second_init; }},
        {"engine", [](auto& c, const auto& v) { c.engine = v; }, [](const auto& c) { return c.engine; }},
        {"members", [](auto& c, const auto& v) { c.members = to_count("members", v); }, [](const auto& c) { return std::to_string(c.members); }},
        {"seed", [](auto& c, const auto& v) { c.seed = to_u64("seed", v); }, [](const auto& c) { return std::to_string(c.seed); }},
        {"workers", [](auto& c, const auto& v) { c.workers = static_cast<int>(to_int("workers", v)); }, [](const auto& c) { return std::to_string(c.workers); }},
        {"dt", [](auto& c, const auto& v) { c.dt = to_double("dt", v); }, [](const auto& c) { return format_double(c.dt); }},
        {"horizon", [](auto& c, const auto& v) { c.horizon = to_double("horizon", v); }, [](const auto& c) { return format_double(c.horizon); }},
        {"scheme", [](auto& c, const auto& v) { c.scheme = v; }, [](const auto& c) { return c.scheme; }},
        {"noise", [](auto& c, const auto& v) { c.noise = v; }, [](const auto& c) { return c.noise; }},
        {"records", [](auto& c, const auto& v) { c.records = to_count("records", v); }, [](const auto& c) { return std::to_string(c.records); }},
        {"T", [](auto& c, const auto& v) { c.T = to_double("T", v); }, [](const auto& c) { return format_double(c.T); }},
        {"mode", [](auto& c, const auto& v) { c.mode = v; }, [](const auto& c) { return c.mode; }},
        {"mc_samples", [](auto& c, const auto& v) { c.mc_samples = to_count("mc_samples", v); }, [](const auto& c) { return std::to_string(c.mc_samples); }},
        {"p_list", [](auto& c, const auto& v) { c.p_list = to_int_list("p_list", v); },
         [](const auto& c) {
             std::string s;
             for (std::size_t k = 0; k < c.p_list.size(); ++k) s += (k ? "," : "") + std::to_string(c.p_list[k]);
             return s;
         }},
        {"gamma_over_p", [](auto& c, const auto& v) { c.gamma_over_p = to_double("gamma_over_p", v); }, [](const auto& c) { return format_double(c.gamma_over_p); }},
        {"level", [](auto& c, const auto& v) { c.level = to_double("level", v); }, [](const auto& c) { return format_double(c.level); }},
        {"compare_ode", [](auto& c, const auto& v) { c.compare_ode = to_bool("compare_ode", v); }, [](const auto& c) { return bool_text(c.compare_ode); }},
        {"write_members", [](auto& c, const auto& v) { c.write_members = to_bool("write_members", v); }, [](const auto& c) { return bool_text(c.write_members); }},
        {"out", [](auto& c, const auto& v) { c.out = v; }, [](const auto& c) { return c.out.string(); }},
    };
    return table;
}

template <class F>
void check(bool ok, const char* field, F&& message) {
    if (!ok) throw ConfigError(std::string("invalid ") + field + ": " + message());
}

}  // namespace

ExperimentKind parse_experiment_kind(const std::string& name) {
    if (name == "sgd") return ExperimentKind::sgd;
    if (name == "ode") return ExperimentKind::ode;
    if (name == "sde") return ExperimentKind::sde;
    if (name == "exit-table" || name == "exit-time") return ExperimentKind::exit_table;
    if (name == "width-sweep") return ExperimentKind::width_sweep;
    if (name == "second-layer-compare" || name == "second-layer") return ExperimentKind::second_layer_compare;
    if (name == "landscape") return ExperimentKind::landscape;
    throw ConfigError("invalid value '" + name + "' for kind");
}

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::sgd: return "sgd";
        case ExperimentKind::ode: return "ode";
        case ExperimentKind::sde: return "sde";
        case ExperimentKind::exit_table: return "exit-table";
        case ExperimentKind::width_sweep: return "width-sweep";
        case ExperimentKind::second_layer_compare: return "second-layer-compare";
        case ExperimentKind::landscape: return "landscape";
    }
    return "unknown";
}

void ExperimentConfig::validate() const {
    const bool ensemble = kind == ExperimentKind::sgd || kind == ExperimentKind::sde ||
                          kind == ExperimentKind::second_layer_compare;
    check(p >= 1, "p", [&] { return "must be at least 1, got " + std::to_string(p); });
    check(d > p, "d", [&] { return "must exceed p, got " + std::to_string(d); });
    check(gamma > 0.0, "gamma", [&] { return "must be positive, got " + format_double(gamma); });
    check(delta >= 0.0, "delta", [&] { return "must be non-negative, got " + format_double(delta); });
    check(rho > 0.0, "rho", [&] { return "must be positive, got " + format_double(rho); });
    check(init == "teacher-overlap" || init == "shared-random" || init == "per-member" || init == "orthogonal", "init",
          [&] { return "expected teacher-overlap, shared-random, per-member or orthogonal, got " + init; });
    check(std::abs(m0) <= 1.0, "m0", [&] { return "must lie in [-1, 1], got " + format_double(m0); });
    check(second_init == "ones" || second_init == "bernoulli", "second_init",
          [&] { return "expected ones or bernoulli, got " + second_init; });
    check(engine == "overlap-chain" || engine == "explicit", "engine",
          [&] { return "expected overlap-chain or explicit, got " + engine; });
    check(!ensemble || members >= 1, "members", [] { return "must be at least 1"; });
    check(workers >= 0, "workers", [&] { return "must be non-negative, got " + std::to_string(workers); });
    check(kind == ExperimentKind::sde ? dt >= 0.0 : dt > 0.0, "dt", [&] { return "out of range: " + format_double(dt); });
    check(horizon > 0.0, "horizon", [&] { return "must be positive, got " + format_double(horizon); });
    check(scheme == "rk4" || scheme == "euler", "scheme", [&] { return "expected rk4 or euler, got " + scheme; });
    check(noise == "sgd" || noise == "published", "noise", [&] { return "expected sgd or published, got " + noise; });
    check(records >= 2, "records", [] { return "must be at least 2"; });
    check(T > 0.0 && T < 1.0, "T", [&] { return "must lie in (0, 1), got " + format_double(T); });
    check(mode == "annealed" || mode == "quenched" || mode == "both", "mode",
          [&] { return "expected annealed, quenched or both, got " + mode; });
    check(mc_samples >= 1000, "mc_samples", [] { return "must be at least 1000"; });
    check(!p_list.empty(), "p_list", [] { return "must not be empty"; });
    for (int q : p_list) {
        check(q >= 1, "p_list", [&] { return "entries must be at least 1, got " + std::to_string(q); });
        check(d > q, "p_list", [&] { return "entries must be below d, got " + std::to_string(q); });
    }
    check(gamma_over_p >= 0.0, "gamma_over_p", [&] { return "must be non-negative, got " + format_double(gamma_over_p); });
    check(level > 0.0 && level < 1.0, "level", [&] { return "must lie in (0, 1), got " + format_double(level); });
    check(!out.empty(), "out", [] { return "must not be empty"; });
    if (kind == ExperimentKind::sde) {
        check(p <= kMaxSdeWidth, "p", [&] { return "the SDE supports p <= " + std::to_string(kMaxSdeWidth); });
        check(!train_a, "train_a", [] { return "the SDE is defined for a fixed second layer"; });
    }
    if (kind == ExperimentKind::ode || kind == ExperimentKind::sde)
        check(init != "per-member", "init", [] { return "per-member needs an ensemble of networks; use sgd"; });
}

void set_field(ExperimentConfig& config, const std::string& key, const std::string& value) {
    for (const Field& f : fields()) {
        if (key == f.key) {
            f.set(config, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
    set_field(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::vector<std::pair<std::string, std::string>> config_fields(const ExperimentConfig& config) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const Field& f : fields()) out.emplace_back(f.key, f.get(config));
    return out;
}

std::string write_config(const ExperimentConfig& config) {
    std::string s;
    for (const auto& [k, v] : config_fields(config)) s += k + " = " + v + "\n";
    return s;
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not of the form key = value");
        set_field(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << is.rdbuf();
    if (path.extension() == ".json") {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(buf.str());
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("malformed manifest " + path.string() + ": " + e.what());
        }
        if (!j.contains("config") || !j["config"].is_object())
            throw ConfigError("manifest " + path.string() + " has no config object");
        for (const auto& [k, v] : j["config"].items()) {
            if (!v.is_string()) throw ConfigError("manifest config value for " + k + " must be a string");
            set_field(base, k, v.get<std::string>());
        }
        return base;
    }
    return parse_config(buf.str(), base);
}

ExperimentConfig default_config(ExperimentKind kind) {
    ExperimentConfig c;
    c.kind = kind;
    switch (kind) {
        case ExperimentKind::sgd:
        case ExperimentKind::ode:
            break;
        case ExperimentKind::sde:
            c.members = 100;
            break;
        case ExperimentKind::exit_table:
            c.d = 2000;
            c.delta = 0.0;
            c.init = "per-member";
            c.horizon = 4.0;
            c.records = 2000;
            c.compare_ode = false;
            c.write_members = false;
            break;
        case ExperimentKind::width_sweep:
            c.d = 2000;
            c.delta = 0.0;
            c.members = 0;
            c.init = "per-member";
            c.p_list = {1, 2, 4, 8, 16, 32};
            c.records = 2000;
            c.write_members = false;
            break;
        case ExperimentKind::second_layer_compare:
            c.d = 1000;
            c.p = 20;
            c.delta = 0.0;
            c.init = "per-member";
            c.horizon = 3.0;
            c.compare_ode = false;
            c.write_members = false;
            break;
        case ExperimentKind::landscape:
            c.delta = 0.0;
            break;
    }
    return c;
}

}  // namespace medlab
