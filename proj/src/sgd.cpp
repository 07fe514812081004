#include "medlab/sgd.hpp"

#include "medlab/errors.hpp"
#include "medlab/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace medlab {
namespace {

Eigen::VectorXd gaussian_vector(NormalSource& rng, std::int64_t d) {
    Eigen::VectorXd v(d);
    rng.fill({v.data(), static_cast<std::size_t>(d)});
    return v;
}

void check_params_match(const TaskParams& params, int p, std::int64_t d) {
    if (params.p != p) throw ConfigError("network width does not match params.p");
    if (params.d != d) throw ConfigError("network dimension does not match params.d");
}

/// In-place version of overlap_increment used by the chain engine.
void apply_increment(OverlapState& s, const Eigen::VectorXd& fields, double z, double x_norm2, const TaskParams& params) {
    const int p = s.width();
    const double pd = static_cast<double>(p) * static_cast<double>(params.d);
    const double ls = fields(p);
    double f = 0.0;
    for (int j = 0; j < p; ++j) f += s.a(j) * fields(j) * fields(j);
    f /= p;
    const double e = ls * ls + std::sqrt(params.delta) * z - f;

    const double lin = 2.0 * params.gamma / pd * e;
    const double quad = 4.0 * params.gamma * params.gamma / (static_cast<double>(p) * pd) * e * e * x_norm2;
    for (int j = 0; j < p; ++j) {
        const double aj = s.a(j), lj = fields(j);
        s.m(j) += lin * aj * lj * ls;
        for (int l = j; l < p; ++l) {
            const double al = s.a(l), ll = fields(l);
            s.Q(j, l) += lin * (aj + al) * lj * ll + quad * aj * al * lj * ll;
            s.Q(l, j) = s.Q(j, l);
        }
    }
    if (params.train_a) {
        const double rate = params.gamma / pd * e;
        for (int j = 0; j < p; ++j) s.a(j) += rate * fields(j) * fields(j);
    }
    if (params.spherical) {
        for (int j = 0; j < p; ++j) s.m(j) /= std::sqrt(s.Q(j, j));
        for (int j = 0; j < p; ++j) {
            for (int l = j + 1; l < p; ++l) {
                s.Q(j, l) /= std::sqrt(s.Q(j, j) * s.Q(l, l));
                s.Q(l, j) = s.Q(j, l);
            }
        }
        s.Q.diagonal().setOnes();
    }
}

template <class T>
void put(std::ostream& os, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ConfigError("truncated checkpoint");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace

TeacherModel TeacherModel::random(std::int64_t d, double delta, std::uint64_t seed, std::uint64_t stream) {
    if (d < 1) throw ConfigError("d must be positive");
    NormalSource rng(seed, stream, StreamPurpose::teacher);
    TeacherModel t;
    t.w = gaussian_vector(rng, d);
    t.w *= std::sqrt(static_cast<double>(d)) / t.w.norm();
    t.delta = delta;
    return t;
}

double TeacherModel::label(const Eigen::VectorXd& x, double z) const {
    const double ls = w.dot(x);
    return ls * ls + std::sqrt(delta) * z;
}

SecondLayerInit parse_second_layer_init(const std::string& name) {
    if (name == "ones") return SecondLayerInit::ones;
    if (name == "bernoulli") return SecondLayerInit::bernoulli;
    throw ConfigError("unknown second-layer init '" + name + "' (expected ones or bernoulli)");
}

StudentNetwork StudentNetwork::random(std::int64_t d, int p, bool spherical, std::uint64_t seed, SecondLayerInit second,
                                      std::uint64_t stream) {
    if (p < 1 || d < 1) throw ConfigError("network dimensions must be positive");
    NormalSource rng(seed, stream, StreamPurpose::init);
    StudentNetwork net;
    net.W.resize(p, d);
    const double norm = std::sqrt(static_cast<double>(d));
    for (int j = 0; j < p; ++j) {
        Eigen::VectorXd w = gaussian_vector(rng, d);
        if (spherical) w *= norm / w.norm();
        net.W.row(j) = w.transpose();
    }
    net.a = Eigen::VectorXd::Ones(p);
    if (second == SecondLayerInit::bernoulli) {
        for (int j = 0; j < p; ++j) net.a(j) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    return net;
}

StudentNetwork StudentNetwork::with_teacher_overlap(const TeacherModel& teacher, int p, double m0, std::uint64_t seed,
                                                    std::uint64_t stream) {
    if (std::abs(m0) > 1.0) throw ConfigError("initial overlap must lie in [-1, 1]");
    const std::int64_t d = teacher.dim();
    const double norm = std::sqrt(static_cast<double>(d));
    const Eigen::VectorXd unit = teacher.w / teacher.w.norm();
    NormalSource rng(seed, stream, StreamPurpose::init);
    StudentNetwork net;
    net.W.resize(p, d);
    for (int j = 0; j < p; ++j) {
        Eigen::VectorXd u = gaussian_vector(rng, d);
        u -= u.dot(unit) * unit;
        u *= norm / u.norm();
        net.W.row(j) = (m0 * norm * unit + std::sqrt(1.0 - m0 * m0) * u).transpose();
    }
    net.a = Eigen::VectorXd::Ones(p);
    return net;
}

struct SampleStream::Impl {
    NormalSource rng;
};

SampleStream::SampleStream(const TeacherModel& teacher, std::uint64_t seed, std::uint64_t stream)
    : teacher_(&teacher), impl_(std::make_unique<Impl>(Impl{NormalSource(seed, stream, StreamPurpose::data)})) {}

SampleStream::~SampleStream() = default;
SampleStream::SampleStream(SampleStream&&) noexcept = default;

void SampleStream::next(Sample& out) {
    const std::int64_t d = teacher_->dim();
    out.x.resize(d);
    impl_->rng.fill({out.x.data(), static_cast<std::size_t>(d)});
    out.x /= std::sqrt(static_cast<double>(d));
    out.y = teacher_->label(out.x, impl_->rng());
}

Sample SampleStream::next() {
    Sample s;
    next(s);
    return s;
}

std::vector<Sample> sample_batch(const TeacherModel& teacher, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("batch size must be at least 1");
    SampleStream stream(teacher, seed);
    std::vector<Sample> out(n);
    for (auto& s : out) stream.next(s);
    return out;
}

void sgd_step_inplace(StudentNetwork& net, const Sample& sample, const TaskParams& params) {
    const int p = net.width();
    const Eigen::VectorXd lam = net.W * sample.x;
    const double f = net.a.dot(lam.cwiseProduct(lam)) / p;
    const double err = f - sample.y;
    const Eigen::VectorXd a_old = net.a;
    if (params.train_a) {
        const double rate = params.gamma / (static_cast<double>(p) * static_cast<double>(net.dim()));
        net.a -= rate * err * lam.cwiseProduct(lam);
    }
    const double norm = std::sqrt(static_cast<double>(net.dim()));
    for (int j = 0; j < p; ++j) {
        net.W.row(j) -= (params.gamma / p * err * 2.0 * a_old(j) * lam(j)) * sample.x.transpose();
        if (params.spherical) net.W.row(j) *= norm / net.W.row(j).norm();
    }
}

StudentNetwork sgd_step(const StudentNetwork& net, const Sample& sample, const TaskParams& params) {
    StudentNetwork out = net;
    sgd_step_inplace(out, sample, params);
    return out;
}

OverlapState measure_overlaps(const StudentNetwork& net, const TeacherModel& teacher) {
    const double d = static_cast<double>(net.dim());
    OverlapState s;
    s.a = net.a;
    s.m = net.W * teacher.w / d;
    s.Q = net.W * net.W.transpose() / d;
    s.Q = 0.5 * (s.Q + s.Q.transpose()).eval();
    s.rho = teacher.w.squaredNorm() / d;
    return s;
}

OverlapState overlap_increment(const OverlapState& state, const Eigen::VectorXd& fields, double z, double x_norm2,
                               const TaskParams& params) {
    if (fields.size() != state.width() + 1) throw InvalidStateError("fields must hold p student and one teacher entry");
    OverlapState out = state;
    apply_increment(out, fields, z, x_norm2, params);
    return out;
}

Trajectory run_sgd(const TeacherModel& teacher, const StudentNetwork& initial, const TaskParams& params,
                   const SgdOptions& options) {
    check_params_match(params, initial.width(), initial.dim());
    if (teacher.dim() != initial.dim()) throw ConfigError("teacher and student dimensions differ");
    const std::size_t stride = options.stride > 0 ? options.stride : default_stride(options.n_steps);
    const double dt = params.time_per_step();

    Trajectory traj(TrajectoryMeta{params, dt, "sgd", options.seed});
    StudentNetwork net = initial;
    traj.append(0.0, measure_overlaps(net, teacher));
    SampleStream stream(teacher, options.seed, options.path);
    Sample sample;
    for (std::size_t k = 1; k <= options.n_steps; ++k) {
        stream.next(sample);
        sgd_step_inplace(net, sample, params);
        if (!net.W.allFinite() || !net.a.allFinite()) throw DivergenceError(k, "non-finite weights");
        if (k % stride == 0 || k == options.n_steps) traj.append(static_cast<double>(k) * dt, measure_overlaps(net, teacher));
    }
    return traj;
}

Trajectory run_sgd_overlaps(const OverlapState& initial, const TaskParams& params, const SgdOptions& options) {
    const int p = initial.width();
    if (params.p != p) throw ConfigError("overlap width does not match params.p");
    if (params.d <= p) throw IllConditionedInitError("the overlap chain requires d > p");
    const std::size_t stride = options.stride > 0 ? options.stride : default_stride(options.n_steps);
    const double dt = params.time_per_step();
    const double dd = static_cast<double>(params.d);

    Trajectory traj(TrajectoryMeta{params, dt, "sgd-overlap-chain", options.seed});
    OverlapState s = initial;
    traj.append(0.0, s);

    NormalSource rng(options.seed, options.path, StreamPurpose::data);
    const int n = p + 1;
    Eigen::MatrixXd L(n, n);
    Eigen::VectorXd D(n), g(n), fields(n);
    for (std::size_t k = 1; k <= options.n_steps; ++k) {
        // LDL^T of Omega without pivoting; vanishing pivots mark directions already spanned.
        const auto om = [&](int i, int j) { return i < p ? (j < p ? s.Q(i, j) : s.m(i)) : (j < p ? s.m(j) : s.rho); };
        double scale = s.rho;
        for (int j = 0; j < p; ++j) scale = std::max(scale, s.Q(j, j));
        L.setZero();
        int rank = 0;
        for (int j = 0; j < n; ++j) {
            double dj = om(j, j);
            for (int c = 0; c < j; ++c) dj -= L(j, c) * L(j, c) * D(c);
            if (dj <= 1e-12 * scale) {
                D(j) = 0.0;
                continue;
            }
            D(j) = dj;
            L(j, j) = 1.0;
            ++rank;
            for (int i = j + 1; i < n; ++i) {
                double v = om(i, j);
                for (int c = 0; c < j; ++c) v -= L(i, c) * L(j, c) * D(c);
                L(i, j) = v / dj;
            }
        }
        double g2 = 0.0;
        for (int j = 0; j < n; ++j) {
            g(j) = D(j) > 0.0 ? rng() : 0.0;
            g2 += g(j) * g(j);
            g(j) *= std::sqrt(D(j));
        }
        fields.noalias() = L * g;
        const double rest = params.d > rank ? rng.chi_squared(static_cast<double>(params.d - rank)) : 0.0;
        const double z = rng();
        apply_increment(s, fields, z, (g2 + rest) / dd, params);
        if (!s.m.allFinite() || !s.Q.allFinite() || !s.a.allFinite()) throw DivergenceError(k, "non-finite overlaps");
        if (k % stride == 0 || k == options.n_steps) traj.append(static_cast<double>(k) * dt, s);
    }
    return traj;
}

void write_checkpoint(const std::filesystem::path& path, const StudentNetwork& net, const TaskParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open checkpoint for writing: " + path.string());
    os.write("MDLB", 4);
    put<std::uint32_t>(os, 1);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(net.dim()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(net.width()));
    put<std::uint32_t>(os, (params.spherical ? 1u : 0u) | (params.train_a ? 2u : 0u));
    for (int j = 0; j < net.width(); ++j)
        for (std::int64_t i = 0; i < net.dim(); ++i) put<double>(os, net.W(j, i));
    for (int j = 0; j < net.width(); ++j) put<double>(os, net.a(j));
    if (!os) throw ConfigError("failed writing checkpoint: " + path.string());
}

StudentNetwork read_checkpoint(const std::filesystem::path& path, bool* spherical, bool* train_a) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "MDLB", 4) != 0) throw ConfigError("not a medlab checkpoint");
    if (get<std::uint32_t>(is) != 1) throw ConfigError("unsupported checkpoint version");
    const auto d = static_cast<std::int64_t>(get<std::uint64_t>(is));
    const auto p = static_cast<int>(get<std::uint32_t>(is));
    const auto flags = get<std::uint32_t>(is);
    if (spherical != nullptr) *spherical = (flags & 1u) != 0;
    if (train_a != nullptr) *train_a = (flags & 2u) != 0;
    StudentNetwork net;
    net.W.resize(p, d);
    net.a.resize(p);
    for (int j = 0; j < p; ++j)
        for (std::int64_t i = 0; i < d; ++i) net.W(j, i) = get<double>(is);
    for (int j = 0; j < p; ++j) net.a(j) = get<double>(is);
    return net;
}

}  // namespace medlab
