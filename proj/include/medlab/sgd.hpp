#pragma once

// One-pass SGD for f(x) = (1/p) sum_j a_j (w_j . x)^2 on y = (w* . x)^2 + sqrt(Delta) z,
// x ~ N(0, I_d/d), with optional projection of every w_j back to norm sqrt(d).

#include "medlab/overlap.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace medlab {

struct TeacherModel {
    Eigen::VectorXd w;  ///< |w|^2 = d
    double delta = 0.0;

    std::int64_t dim() const noexcept { return w.size(); }

    /// y = (w . x)^2 + sqrt(Delta) z.
    double label(const Eigen::VectorXd& x, double z) const;

    /// Uniform on the sphere of radius sqrt(d).
    static TeacherModel random(std::int64_t d, double delta, std::uint64_t seed, std::uint64_t stream = 0);
};

enum class SecondLayerInit { ones, bernoulli };

SecondLayerInit parse_second_layer_init(const std::string& name);

struct StudentNetwork {
    Eigen::MatrixXd W;  ///< p x d
    Eigen::VectorXd a;

    int width() const noexcept { return static_cast<int>(W.rows()); }
    std::int64_t dim() const noexcept { return W.cols(); }

    /// Rows uniform on the sphere of radius sqrt(d) (spherical) or N(0, I_d)
    /// (unconstrained). a = 1, or a_j in {0, 1} with probability 1/2 each.
    static StudentNetwork random(std::int64_t d, int p, bool spherical, std::uint64_t seed,
                                 SecondLayerInit second = SecondLayerInit::ones, std::uint64_t stream = 0);

    /// Rows w_j = m0 w* + sqrt(1 - m0^2) u_j with u_j a random direction orthogonal
    /// to w* scaled to norm sqrt(d), so every teacher overlap equals m0 exactly.
    static StudentNetwork with_teacher_overlap(const TeacherModel& teacher, int p, double m0, std::uint64_t seed,
                                               std::uint64_t stream = 0);
};

struct Sample {
    Eigen::VectorXd x;
    double y = 0.0;
};

/// Deterministic stream of fresh samples for (seed, stream).
class SampleStream {
public:
    SampleStream(const TeacherModel& teacher, std::uint64_t seed, std::uint64_t stream = 0);
    ~SampleStream();
    SampleStream(SampleStream&&) noexcept;

    /// Overwrites `out` with the next sample.
    void next(Sample& out);
    Sample next();

private:
    struct Impl;
    const TeacherModel* teacher_;
    std::unique_ptr<Impl> impl_;
};

std::vector<Sample> sample_batch(const TeacherModel& teacher, std::size_t n, std::uint64_t seed);

/// In-place SGD step: E' = f - y, w_j -= (gamma/p) E' 2 a_j lambda_j x,
/// a_j -= gamma/(p d) E' lambda_j^2 when train_a, then optional projection.
void sgd_step_inplace(StudentNetwork& net, const Sample& sample, const TaskParams& params);
StudentNetwork sgd_step(const StudentNetwork& net, const Sample& sample, const TaskParams& params);

/// m = W w*/d, Q = W W^T/d, rho = |w*|^2/d.
OverlapState measure_overlaps(const StudentNetwork& net, const TeacherModel& teacher);

/// Exact overlaps after one SGD step, from the pre-activations lambda (student
/// fields, then teacher field), the label noise z and |x|^2 of that sample.
OverlapState overlap_increment(const OverlapState& state, const Eigen::VectorXd& fields, double z, double x_norm2,
                               const TaskParams& params);

struct SgdOptions {
    std::size_t n_steps = 0;
    std::size_t stride = 0;  ///< 0 picks default_stride
    std::uint64_t seed = 0;
    std::uint64_t path = 0;  ///< stream index of this run within an ensemble
};

/// Explicit d-dimensional simulation. Throws DivergenceError on non-finite weights.
Trajectory run_sgd(const TeacherModel& teacher, const StudentNetwork& initial, const TaskParams& params,
                   const SgdOptions& options);

/// The same Markov chain run directly on the overlaps. Each step draws
/// (lambda, lambda_*) ~ N(0, Omega), |x|^2 = (|g|^2 + chi^2_{d-r})/d with g the
/// whitened fields and r the rank of Omega, and z ~ N(0, 1); the transition law
/// of the overlaps is identical to run_sgd's at O(p^3) cost per step.
Trajectory run_sgd_overlaps(const OverlapState& initial, const TaskParams& params, const SgdOptions& options);

/// Binary checkpoint, little-endian: "MDLB", u32 version = 1, u64 d, u32 p,
/// u32 flags (bit 0 spherical, bit 1 train_a), p*d f64 of W row-major, p f64 of a.
void write_checkpoint(const std::filesystem::path& path, const StudentNetwork& net, const TaskParams& params);
StudentNetwork read_checkpoint(const std::filesystem::path& path, bool* spherical = nullptr, bool* train_a = nullptr);

}  // namespace medlab
