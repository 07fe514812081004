#pragma once

// Text artifacts: trajectory CSV and plot-ready series CSV.
//
// Trajectory CSV layout:
//   # scheme=rk4,seed=3,dt=0.001,d=3000,p=2,gamma=0.1,delta=0.1,rho=1,spherical=1,train_a=0
//   t,risk,m_1,m_2,Q_1_1,Q_1_2,Q_2_2,a_1,a_2
//   ...
// Every float is printed with 17 significant digits, so a write/read cycle is exact.

#include "medlab/overlap.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace medlab {

/// %.17g
std::string format_double(double x);

std::vector<std::string> trajectory_csv_header(int p);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);

/// Inverse of write_trajectory_csv. The metadata line is optional; stored risks
/// are kept as read. Throws ConfigError on malformed input.
Trajectory read_trajectory_csv(std::istream& is);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

/// Plot-ready columns. y_err may be empty, in which case the column is omitted.
struct Series {
    std::string x_name = "x";
    std::string y_name = "y";
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> y_err;
};

void write_series_csv(const std::filesystem::path& path, const Series& series);

/// Several y columns over a shared x column; names[0] labels x.
void write_columns_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                       const std::vector<std::vector<double>>& columns);

}  // namespace medlab
