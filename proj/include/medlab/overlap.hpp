#pragma once

#include "medlab/moments.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace medlab {

/// Problem configuration shared by every dynamics tier.
struct TaskParams {
    std::int64_t d = 1000;  ///< ambient dimension
    int p = 1;              ///< hidden width
    double gamma = 0.1;     ///< first-layer learning rate
    double delta = 0.0;     ///< label-noise variance
    bool spherical = true;  ///< project hidden weights back to norm sqrt(d) after every step
    bool train_a = false;   ///< train the second layer with rate gamma/d

    /// Throws ConfigError on out-of-range fields. Warns when p = 1 and
    /// gamma >= 1/6, the stability bound of the single-neuron dynamics.
    void validate() const;

    /// Rescaled time per SGD step, gamma / (p d).
    double time_per_step() const noexcept { return gamma / (static_cast<double>(p) * static_cast<double>(d)); }
};

/// Sufficient statistics: second-layer weights, teacher overlaps m = W w*/d,
/// student overlaps Q = W W^T/d and teacher norm rho = |w*|^2/d.
struct OverlapState {
    Eigen::VectorXd a;
    Eigen::VectorXd m;
    Eigen::MatrixXd Q;
    double rho = 1.0;

    int width() const noexcept { return static_cast<int>(m.size()); }

    /// a = 1, m = 0, Q = I, rho = 1.
    static OverlapState orthogonal(int p);

    /// Throws InvalidStateError if Q is not symmetric PSD, if some |m_j| exceeds
    /// sqrt(Q_jj rho) by more than 1e-10, or (spherical) if Q_jj or rho differ from 1
    /// by more than 1e-10.
    void validate(bool spherical) const;

    /// Joint covariance of (lambda_1..lambda_p, lambda_*): [[Q, m], [m^T, rho]].
    OmegaMatrix omega() const;
};

/// Population risk E[(y - f)^2]/2 as a closed function of the overlaps:
/// (3 rho^2 + Delta)/2 - (1/p) sum_j a_j (rho Q_jj + 2 m_j^2)
///   + (1/2p^2) sum_jl a_j a_l (Q_jj Q_ll + 2 Q_jl^2).
double population_risk(const OverlapState& state, double delta);

/// population_risk minus its infimum Delta/2.
inline double excess_risk(const OverlapState& state, double delta) { return population_risk(state, delta) - 0.5 * delta; }

struct TrajectoryPoint {
    double t = 0.0;
    OverlapState state;
    double risk = 0.0;
};

struct TrajectoryMeta {
    TaskParams params;
    double dt = 0.0;
    std::string scheme;
    std::optional<std::uint64_t> seed;
};

/// Time-indexed record of overlap states. Times are strictly increasing.
class Trajectory {
public:
    Trajectory() = default;
    explicit Trajectory(TrajectoryMeta meta) : meta_(std::move(meta)) {}

    /// Appends a point; the risk is recomputed from the state.
    void append(double t, const OverlapState& state);
    void append_point(TrajectoryPoint point);

    const TrajectoryMeta& meta() const noexcept { return meta_; }
    TrajectoryMeta& meta() noexcept { return meta_; }
    const std::vector<TrajectoryPoint>& points() const noexcept { return points_; }
    std::size_t size() const noexcept { return points_.size(); }
    bool empty() const noexcept { return points_.empty(); }
    const TrajectoryPoint& front() const { return points_.front(); }
    const TrajectoryPoint& back() const { return points_.back(); }

    std::vector<double> times() const;
    std::vector<double> risks() const;

private:
    TrajectoryMeta meta_;
    std::vector<TrajectoryPoint> points_;
};

/// Record-every-k stride that keeps at most max_points records for n_steps steps.
std::size_t default_stride(std::size_t n_steps, std::size_t max_points = 100000);

}  // namespace medlab
