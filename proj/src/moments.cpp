#include "medlab/moments.hpp"

#include "medlab/diagnostics.hpp"
#include "medlab/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace medlab {
namespace {

constexpr double kAcceptEig = 1e-10;
constexpr double kClampEig = 1e-6;

std::string key_of(const MonomialIndex& idx) {
    std::string key;
    key.reserve(idx.fields().size());
    for (int f : idx.fields()) key.push_back(static_cast<char>(static_cast<unsigned char>(f)));
    return key;
}

int field_of(char c) { return static_cast<unsigned char>(c); }

}  // namespace

OmegaMatrix::OmegaMatrix(Eigen::MatrixXd omega) {
    if (omega.rows() != omega.cols() || omega.rows() == 0) {
        throw InvalidStateError("covariance matrix must be square and non-empty");
    }
    if (!omega.allFinite()) throw InvalidStateError("covariance matrix has non-finite entries");
    const double scale = std::max(1.0, omega.diagonal().cwiseAbs().maxCoeff());
    const double asym = (omega - omega.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale) {
        std::ostringstream os;
        os << "covariance matrix is not symmetric (max asymmetry " << asym << ")";
        throw InvalidStateError(os.str());
    }
    omega = 0.5 * (omega + omega.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega);
    min_eigenvalue_ = eig.eigenvalues().minCoeff();
    if (min_eigenvalue_ < -kClampEig * scale) {
        std::ostringstream os;
        os << "covariance matrix is not positive semi-definite (smallest eigenvalue " << min_eigenvalue_ << ")";
        throw InvalidStateError(os.str());
    }
    if (min_eigenvalue_ < -kAcceptEig * scale) {
        std::ostringstream os;
        os << "clamping covariance eigenvalue " << min_eigenvalue_ << " to zero";
        warn(os.str());
        Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
        omega = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
        omega = 0.5 * (omega + omega.transpose()).eval();
    }
    omega_ = std::move(omega);
}

OmegaMatrix OmegaMatrix::with_noise_field() const {
    const int n = size();
    Eigen::MatrixXd ext = Eigen::MatrixXd::Zero(n + 1, n + 1);
    ext.topLeftCorner(n, n) = omega_;
    ext(n, n) = 1.0;
    return OmegaMatrix(std::move(ext), std::min(min_eigenvalue_, 1.0), Trusted{});
}

MonomialIndex::MonomialIndex(std::initializer_list<int> fields) : fields_(fields) {
    std::sort(fields_.begin(), fields_.end());
}

MonomialIndex::MonomialIndex(std::span<const int> fields) : fields_(fields.begin(), fields.end()) {
    std::sort(fields_.begin(), fields_.end());
}

MonomialIndex MonomialIndex::operator*(const MonomialIndex& other) const {
    MonomialIndex out;
    out.fields_.reserve(fields_.size() + other.fields_.size());
    std::merge(fields_.begin(), fields_.end(), other.fields_.begin(), other.fields_.end(),
               std::back_inserter(out.fields_));
    return out;
}

MomentCache::MomentCache(const OmegaMatrix& omega) : omega_(&omega) {}

double MomentCache::moment(const MonomialIndex& idx) {
    if (idx.degree() > kMaxMomentDegree) {
        throw UnsupportedOrderError("moment of degree " + std::to_string(idx.degree()) +
                                    " exceeds the pairing cap of " + std::to_string(kMaxMomentDegree));
    }
    for (int f : idx.fields()) {
        if (f < 0 || f >= omega_->size()) {
            throw InvalidStateError("field index " + std::to_string(f) + " out of range");
        }
    }
    if (idx.degree() % 2 != 0) return 0.0;
    return pairings(key_of(idx));
}

double MomentCache::pairings(std::string_view key) {
    if (key.empty()) return 1.0;
    if (auto it = memo_.find(std::string(key)); it != memo_.end()) return it->second;

    const int first = field_of(key[0]);
    const std::string_view rest = key.substr(1);
    double total = 0.0;
    std::string residual;
    residual.reserve(rest.size());
    for (std::size_t pos = 0; pos < rest.size();) {
        std::size_t end = pos;
        while (end < rest.size() && rest[end] == rest[pos]) ++end;
        const auto multiplicity = static_cast<double>(end - pos);
        const double w = (*omega_)(first, field_of(rest[pos]));
        if (w != 0.0) {
            residual.assign(rest.substr(0, pos));
            residual.append(rest.substr(pos + 1));
            total += multiplicity * w * pairings(residual);
        }
        pos = end;
    }
    memo_.emplace(std::string(key), total);
    return total;
}

double wick_moment(const MonomialIndex& idx, const OmegaMatrix& omega) {
    MomentCache cache(omega);
    return cache.moment(idx);
}

double sixth_moment_closed(int a, int b, int c, int d, const OmegaMatrix& omega) {
    const int n = omega.size();
    for (int f : {a, b, c, d}) {
        if (f < 0 || f >= n) throw InvalidStateError("field index " + std::to_string(f) + " out of range");
    }
    const auto& w = omega;
    return w(a, b) * w(c, c) * w(d, d) + 2.0 * w(a, b) * w(c, d) * w(c, d) + 2.0 * w(a, c) * w(b, c) * w(d, d) +
           4.0 * w(a, c) * w(b, d) * w(c, d) + 4.0 * w(a, d) * w(b, c) * w(c, d) + 2.0 * w(a, d) * w(b, d) * w(c, c);
}

FieldPolynomial::FieldPolynomial(std::span<const PolynomialTerm> terms) {
    for (const auto& t : terms) terms_[t.index] += t.coefficient;
}

FieldPolynomial FieldPolynomial::constant(double c) { return monomial(c, MonomialIndex{}); }

FieldPolynomial FieldPolynomial::monomial(double c, MonomialIndex idx) {
    FieldPolynomial p;
    p.terms_[std::move(idx)] = c;
    return p;
}

FieldPolynomial& FieldPolynomial::operator+=(const FieldPolynomial& rhs) {
    for (const auto& [idx, c] : rhs.terms_) terms_[idx] += c;
    return *this;
}

FieldPolynomial FieldPolynomial::operator+(const FieldPolynomial& rhs) const {
    FieldPolynomial out = *this;
    out += rhs;
    return out;
}

FieldPolynomial FieldPolynomial::operator-(const FieldPolynomial& rhs) const { return *this + rhs.scaled(-1.0); }

FieldPolynomial FieldPolynomial::operator*(const FieldPolynomial& rhs) const {
    FieldPolynomial out;
    for (const auto& [ia, ca] : terms_) {
        for (const auto& [ib, cb] : rhs.terms_) out.terms_[ia * ib] += ca * cb;
    }
    return out;
}

FieldPolynomial FieldPolynomial::scaled(double c) const {
    FieldPolynomial out = *this;
    for (auto& [idx, coef] : out.terms_) coef *= c;
    return out;
}

int FieldPolynomial::max_degree() const noexcept {
    int deg = 0;
    for (const auto& [idx, c] : terms_) deg = std::max(deg, idx.degree());
    return deg;
}

std::vector<PolynomialTerm> FieldPolynomial::terms() const {
    std::vector<PolynomialTerm> out;
    out.reserve(terms_.size());
    for (const auto& [idx, c] : terms_) out.push_back({c, idx});
    return out;
}

double displacement_moment(std::span<const PolynomialTerm> poly, const OmegaMatrix& omega) {
    MomentCache cache(omega);
    double total = 0.0;
    for (const auto& term : poly) total += term.coefficient * cache.moment(term.index);
    return total;
}

double displacement_moment(const FieldPolynomial& poly, MomentCache& cache) {
    double total = 0.0;
    for (const auto& term : poly.terms()) total += term.coefficient * cache.moment(term.index);
    return total;
}

QuadraticFormMoments quadratic_form_moments(const OmegaMatrix& omega, const Eigen::VectorXd& weights) {
    if (weights.size() != omega.size()) throw InvalidStateError("quadratic form weight length mismatch");
    const Eigen::MatrixXd& om = omega.matrix();
    const Eigen::MatrixXd c_om = weights.asDiagonal() * om;  // C Omega
    const Eigen::MatrixXd om_c_om = om * c_om;               // Omega C Omega
    const double tr1 = c_om.trace();
    const double tr2 = (c_om * c_om).trace();

    QuadraticFormMoments out;
    out.form_mean = tr1;
    out.form_second_moment = tr1 * tr1 + 2.0 * tr2;
    out.pair_times_form = om * tr1 + 2.0 * om_c_om;
    out.pair_times_form_squared = om * out.form_second_moment + 4.0 * tr1 * om_c_om + 8.0 * (om_c_om * c_om);
    return out;
}

}  // namespace medlab
