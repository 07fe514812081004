#include "medlab/overlap.hpp"

#include "medlab/diagnostics.hpp"
#include "medlab/errors.hpp"

#include <cmath>
#include <sstream>

namespace medlab {

void TaskParams::validate() const {
    if (d < 1) throw ConfigError("d must be positive");
    if (p < 1) throw ConfigError("p must be positive");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be finite and non-negative");
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be finite and non-negative");
    if (p == 1 && gamma >= 1.0 / 6.0) {
        std::ostringstream os;
        os << "gamma = " << gamma << " is above the p = 1 stability bound 1/6; the overlap will not converge";
        warn(os.str());
    }
}

OverlapState OverlapState::orthogonal(int p) {
    OverlapState s;
    s.a = Eigen::VectorXd::Ones(p);
    s.m = Eigen::VectorXd::Zero(p);
    s.Q = Eigen::MatrixXd::Identity(p, p);
    s.rho = 1.0;
    return s;
}

void OverlapState::validate(bool spherical) const {
    const int p = width();
    if (p < 1) throw InvalidStateError("overlap state has zero width");
    if (a.size() != p || Q.rows() != p || Q.cols() != p) throw InvalidStateError("overlap state dimensions disagree");
    if (!a.allFinite() || !m.allFinite() || !Q.allFinite() || !std::isfinite(rho)) {
        throw InvalidStateError("overlap state has non-finite entries");
    }
    if (rho <= 0.0) throw InvalidStateError("teacher norm rho must be positive");
    for (int j = 0; j < p; ++j) {
        const double bound = std::sqrt(std::max(Q(j, j), 0.0) * rho) + 1e-10;
        if (std::abs(m(j)) > bound) {
            std::ostringstream os;
            os << "|m_" << j << "| = " << std::abs(m(j)) << " exceeds sqrt(Q_jj rho) = " << bound;
            throw InvalidStateError(os.str());
        }
        if (spherical && std::abs(Q(j, j) - 1.0) > 1e-10) {
            std::ostringstream os;
            os << "spherical state requires Q_jj = 1, found Q_" << j << j << " = " << Q(j, j);
            throw InvalidStateError(os.str());
        }
    }
    if (spherical && std::abs(rho - 1.0) > 1e-10) throw InvalidStateError("spherical state requires rho = 1");
    (void)omega();  // symmetry and PSD of the joint matrix
}

OmegaMatrix OverlapState::omega() const {
    const int p = width();
    Eigen::MatrixXd om(p + 1, p + 1);
    om.topLeftCorner(p, p) = Q;
    om.topRightCorner(p, 1) = m;
    om.bottomLeftCorner(1, p) = m.transpose();
    om(p, p) = rho;
    return OmegaMatrix(std::move(om));
}

double population_risk(const OverlapState& s, double delta) {
    const double p = s.width();
    const Eigen::VectorXd diag = s.Q.diagonal();
    const double linear = s.a.dot(s.rho * diag + 2.0 * s.m.cwiseProduct(s.m)) / p;
    const double ad = s.a.dot(diag);
    const double quad = ad * ad + 2.0 * s.a.dot(s.Q.cwiseProduct(s.Q) * s.a);
    return 0.5 * (3.0 * s.rho * s.rho + delta) - linear + quad / (2.0 * p * p);
}

void Trajectory::append(double t, const OverlapState& state) {
    append_point(TrajectoryPoint{t, state, population_risk(state, meta_.params.delta)});
}

void Trajectory::append_point(TrajectoryPoint point) {
    if (!points_.empty() && !(point.t > points_.back().t)) {
        std::ostringstream os;
        os << "trajectory times must be strictly increasing (" << point.t << " after " << points_.back().t << ")";
        throw InvalidStateError(os.str());
    }
    points_.push_back(std::move(point));
}

std::vector<double> Trajectory::times() const {
    std::vector<double> out;
    out.reserve(points_.size());
    for (const auto& pt : points_) out.push_back(pt.t);
    return out;
}

std::vector<double> Trajectory::risks() const {
    std::vector<double> out;
    out.reserve(points_.size());
    for (const auto& pt : points_) out.push_back(pt.risk);
    return out;
}

std::size_t default_stride(std::size_t n_steps, std::size_t max_points) {
    if (max_points < 2 || n_steps < max_points) return 1;
    return (n_steps + max_points - 2) / (max_points - 1);
}

}  // namespace medlab
