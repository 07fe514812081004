#pragma once

#include "medlab/overlap.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace medlab::testing {

inline Eigen::MatrixXd random_psd(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd A(n, n + 2);
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) A(i, j) = g(rng);
    Eigen::MatrixXd om = A * A.transpose() / static_cast<double>(n + 2);
    return 0.5 * (om + om.transpose());
}

/// Gram matrix of p + 1 random unit vectors in dimension dim: a valid spherical state.
inline OverlapState random_spherical_state(int p, std::mt19937_64& rng, int dim = 12) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd V(p + 1, dim);
    for (int i = 0; i <= p; ++i) {
        for (int k = 0; k < dim; ++k) V(i, k) = g(rng);
        V.row(i).normalize();
    }
    Eigen::MatrixXd G = V * V.transpose();
    OverlapState s;
    s.a = Eigen::VectorXd::Ones(p);
    s.Q = G.topLeftCorner(p, p);
    s.Q.diagonal().setOnes();
    s.m = G.col(p).head(p);
    s.rho = 1.0;
    return s;
}

/// Gram matrix of p + 1 random vectors with random norms: a valid unconstrained state.
inline OverlapState random_free_state(int p, std::mt19937_64& rng, int dim = 12) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.5, 1.5);
    Eigen::MatrixXd V(p + 1, dim);
    for (int i = 0; i <= p; ++i) {
        for (int k = 0; k < dim; ++k) V(i, k) = g(rng);
        V.row(i) *= u(rng) / V.row(i).norm();
    }
    Eigen::MatrixXd G = V * V.transpose();
    OverlapState s;
    s.a = Eigen::VectorXd::Ones(p);
    s.Q = G.topLeftCorner(p, p);
    s.m = G.col(p).head(p);
    s.rho = G(p, p);
    return s;
}

/// Brute-force sum over all perfect matchings of a list of field indices,
/// with no memoization or multiset grouping.
inline double brute_force_pairings(std::vector<int> fields, const Eigen::MatrixXd& om) {
    if (fields.empty()) return 1.0;
    if (fields.size() % 2 != 0) return 0.0;
    const int first = fields.front();
    double total = 0.0;
    for (std::size_t k = 1; k < fields.size(); ++k) {
        std::vector<int> rest;
        for (std::size_t i = 1; i < fields.size(); ++i)
            if (i != k) rest.push_back(fields[i]);
        total += om(first, fields[k]) * brute_force_pairings(rest, om);
    }
    return total;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double standard_error(const std::vector<double>& v) {
    const double mu = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// Exact OU transition m' = m e^{mu h} + sigma sqrt((e^{2 mu h} - 1)/(2 mu)) Z.
inline std::vector<double> ou_exit_times(double mu, double sigma2, double T, double h, int paths, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    const double growth = std::exp(mu * h);
    const double sd = std::sqrt(sigma2 * (std::exp(2.0 * mu * h) - 1.0) / (2.0 * mu));
    const double b = std::sqrt(T);
    std::vector<double> out;
    for (int k = 0; k < paths; ++k) {
        double m = 0.0;
        std::size_t n = 0;
        while (std::abs(m) < b) {
            m = m * growth + sd * g(rng);
            ++n;
        }
        out.push_back(static_cast<double>(n) * h);
    }
    return out;
}

inline double relative_error(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

}  // namespace medlab::testing
