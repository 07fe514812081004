#include "medlab/io.hpp"

#include "medlab/errors.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace medlab {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("malformed number '" + s + "' in " + what);
    }
}

std::map<std::string, std::string> parse_meta(const std::string& line) {
    std::map<std::string, std::string> kv;
    std::string body = line.substr(1);
    while (!body.empty() && body.front() == ' ') body.erase(body.begin());
    for (const std::string& item : split(body, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("malformed trajectory metadata item '" + item + "'");
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return kv;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open for writing: " + path.string());
    return os;
}

}  // namespace

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::vector<std::string> trajectory_csv_header(int p) {
    std::vector<std::string> h{"t", "risk"};
    for (int j = 1; j <= p; ++j) h.push_back("m_" + std::to_string(j));
    for (int j = 1; j <= p; ++j)
        for (int l = j; l <= p; ++l) h.push_back("Q_" + std::to_string(j) + "_" + std::to_string(l));
    for (int j = 1; j <= p; ++j) h.push_back("a_" + std::to_string(j));
    return h;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    const TrajectoryMeta& meta = traj.meta();
    const TaskParams& tp = meta.params;
    const int p = traj.empty() ? tp.p : traj.front().state.width();
    os << "# scheme=" << meta.scheme << ",seed=" << (meta.seed ? std::to_string(*meta.seed) : "none")
       << ",dt=" << format_double(meta.dt) << ",d=" << tp.d << ",p=" << p << ",gamma=" << format_double(tp.gamma)
       << ",delta=" << format_double(tp.delta)
       << ",rho=" << format_double(traj.empty() ? 1.0 : traj.front().state.rho) << ",spherical=" << tp.spherical
       << ",train_a=" << tp.train_a << '\n';
    const std::vector<std::string> header = trajectory_csv_header(p);
    for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
    os << '\n';
    for (const TrajectoryPoint& pt : traj.points()) {
        os << format_double(pt.t) << ',' << format_double(pt.risk);
        for (int j = 0; j < p; ++j) os << ',' << format_double(pt.state.m(j));
        for (int j = 0; j < p; ++j)
            for (int l = j; l < p; ++l) os << ',' << format_double(pt.state.Q(j, l));
        for (int j = 0; j < p; ++j) os << ',' << format_double(pt.state.a(j));
        os << '\n';
    }
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
    std::ofstream os = open_out(path);
    write_trajectory_csv(os, traj);
    if (!os) throw ConfigError("failed writing " + path.string());
}

Trajectory read_trajectory_csv(std::istream& is) {
    std::string line;
    TrajectoryMeta meta;
    double rho = 1.0;
    if (!std::getline(is, line)) throw ConfigError("empty trajectory CSV");
    if (!line.empty() && line.front() == '#') {
        const auto kv = parse_meta(line);
        const auto get = [&](const char* key) -> const std::string* {
            const auto it = kv.find(key);
            return it == kv.end() ? nullptr : &it->second;
        };
        if (auto v = get("scheme")) meta.scheme = *v;
        if (auto v = get("seed"); v && *v != "none") meta.seed = std::stoull(*v);
        if (auto v = get("dt")) meta.dt = parse_double(*v, "metadata dt");
        if (auto v = get("d")) meta.params.d = std::stoll(*v);
        if (auto v = get("p")) meta.params.p = std::stoi(*v);
        if (auto v = get("gamma")) meta.params.gamma = parse_double(*v, "metadata gamma");
        if (auto v = get("delta")) meta.params.delta = parse_double(*v, "metadata delta");
        if (auto v = get("rho")) rho = parse_double(*v, "metadata rho");
        if (auto v = get("spherical")) meta.params.spherical = *v == "1";
        if (auto v = get("train_a")) meta.params.train_a = *v == "1";
        if (!std::getline(is, line)) throw ConfigError("trajectory CSV has no header row");
    }
    const std::vector<std::string> header = split(line, ',');
    int p = 0;
    for (const std::string& h : header)
        if (h.rfind("m_", 0) == 0) ++p;
    if (p < 1 || header != trajectory_csv_header(p)) throw ConfigError("trajectory CSV header does not match t,risk,m_*,Q_*,a_*");
    meta.params.p = p;

    Trajectory traj(meta);
    std::size_t row = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++row;
        const std::vector<std::string> cells = split(line, ',');
        if (cells.size() != header.size())
            throw ConfigError("trajectory CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                              " fields, expected " + std::to_string(header.size()));
        std::size_t c = 0;
        const auto next = [&] { return parse_double(cells[c++], "row " + std::to_string(row)); };
        TrajectoryPoint pt;
        pt.t = next();
        pt.risk = next();
        pt.state.rho = rho;
        pt.state.m.resize(p);
        pt.state.Q.resize(p, p);
        pt.state.a.resize(p);
        for (int j = 0; j < p; ++j) pt.state.m(j) = next();
        for (int j = 0; j < p; ++j)
            for (int l = j; l < p; ++l) pt.state.Q(j, l) = pt.state.Q(l, j) = next();
        for (int j = 0; j < p; ++j) pt.state.a(j) = next();
        if (!traj.empty() && !(pt.t > traj.back().t))
            throw ConfigError("trajectory CSV row " + std::to_string(row) + ": times must be strictly increasing");
        traj.append_point(std::move(pt));
    }
    return traj;
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open trajectory CSV: " + path.string());
    return read_trajectory_csv(is);
}

void write_series_csv(const std::filesystem::path& path, const Series& series) {
    if (series.y.size() != series.x.size() || (!series.y_err.empty() && series.y_err.size() != series.x.size()))
        throw ConfigError("series columns have different lengths");
    std::vector<std::string> names{series.x_name, series.y_name};
    std::vector<std::vector<double>> cols{series.x, series.y};
    if (!series.y_err.empty()) {
        names.push_back(series.y_name + "_err");
        cols.push_back(series.y_err);
    }
    write_columns_csv(path, names, cols);
}

void write_columns_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                       const std::vector<std::vector<double>>& columns) {
    if (names.size() != columns.size() || columns.empty()) throw ConfigError("column names do not match columns");
    for (const auto& c : columns)
        if (c.size() != columns.front().size()) throw ConfigError("columns have different lengths");
    std::ofstream os = open_out(path);
    for (std::size_t k = 0; k < names.size(); ++k) os << (k ? "," : "") << names[k];
    os << '\n';
    for (std::size_t i = 0; i < columns.front().size(); ++i) {
        for (std::size_t k = 0; k < columns.size(); ++k) os << (k ? "," : "") << format_double(columns[k][i]);
        os << '\n';
    }
    if (!os) throw ConfigError("failed writing " + path.string());
}

}  // namespace medlab
