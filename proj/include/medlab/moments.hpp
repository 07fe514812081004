#pragma once

// Moments of centred multivariate Gaussians via Isserlis (Wick) pairings.
//
// Field indices are zero-based. For an overlap matrix built from a width-p
// network, fields 0..p-1 are the student pre-activations and field p is the
// teacher pre-activation. A label-noise field, when needed, is appended as an
// independent unit-variance field (see OmegaMatrix::with_noise_field).

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace medlab {

inline constexpr int kMaxMomentDegree = 12;

/// Symmetric positive semi-definite covariance of the joint fields.
class OmegaMatrix {
public:
    /// Validates symmetry and positive semi-definiteness. Eigenvalues down to
    /// -1e-10 (scaled by the largest diagonal entry) are accepted as-is;
    /// down to -1e-6 they are clamped to zero with a warning; anything more
    /// negative throws InvalidStateError.
    explicit OmegaMatrix(Eigen::MatrixXd omega);

    int size() const noexcept { return static_cast<int>(omega_.rows()); }
    double operator()(int a, int b) const { return omega_(a, b); }
    const Eigen::MatrixXd& matrix() const noexcept { return omega_; }

    /// Index of the teacher field when this matrix was built from an overlap state.
    int teacher_index() const noexcept { return size() - 1; }

    /// Block-diagonal extension with one extra independent N(0,1) field.
    OmegaMatrix with_noise_field() const;

    /// Smallest eigenvalue observed during validation (before clamping).
    double min_eigenvalue() const noexcept { return min_eigenvalue_; }

private:
    struct Trusted {};
    OmegaMatrix(Eigen::MatrixXd omega, double min_eig, Trusted) : omega_(std::move(omega)), min_eigenvalue_(min_eig) {}

    Eigen::MatrixXd omega_;
    double min_eigenvalue_ = 0.0;
};

/// Multiset of field indices, stored sorted. Degree is the multiset size.
class MonomialIndex {
public:
    MonomialIndex() = default;
    MonomialIndex(std::initializer_list<int> fields);
    explicit MonomialIndex(std::span<const int> fields);

    int degree() const noexcept { return static_cast<int>(fields_.size()); }
    const std::vector<int>& fields() const noexcept { return fields_; }

    /// Union of the two multisets (product of the monomials).
    MonomialIndex operator*(const MonomialIndex& other) const;

    bool operator==(const MonomialIndex&) const = default;
    auto operator<=>(const MonomialIndex&) const = default;

private:
    std::vector<int> fields_;
};

/// Memoized pairing enumeration bound to one covariance matrix.
/// Not thread-safe; use one instance per thread.
class MomentCache {
public:
    explicit MomentCache(const OmegaMatrix& omega);
    MomentCache(OmegaMatrix&&) = delete;

    /// E[prod_k lambda_{idx_k}]; throws UnsupportedOrderError above degree 12.
    double moment(const MonomialIndex& idx);

    std::size_t cached_entries() const noexcept { return memo_.size(); }

private:
    double pairings(std::string_view key);

    const OmegaMatrix* omega_;
    std::unordered_map<std::string, double> memo_;
};

/// Sum over perfect matchings of the index multiset of the product of
/// matched covariance entries. Zero for odd degree.
double wick_moment(const MonomialIndex& idx, const OmegaMatrix& omega);

/// E[l_a l_b l_c^2 l_d^2] from the six-term closed form.
double sixth_moment_closed(int a, int b, int c, int d, const OmegaMatrix& omega);

struct PolynomialTerm {
    double coefficient;
    MonomialIndex index;
};

/// Linear combination of Gaussian monomials; duplicate monomials are merged.
class FieldPolynomial {
public:
    FieldPolynomial() = default;
    explicit FieldPolynomial(std::span<const PolynomialTerm> terms);

    static FieldPolynomial constant(double c);
    static FieldPolynomial monomial(double c, MonomialIndex idx);

    FieldPolynomial& operator+=(const FieldPolynomial& rhs);
    FieldPolynomial operator+(const FieldPolynomial& rhs) const;
    FieldPolynomial operator-(const FieldPolynomial& rhs) const;
    FieldPolynomial operator*(const FieldPolynomial& rhs) const;
    FieldPolynomial scaled(double c) const;

    int max_degree() const noexcept;
    std::vector<PolynomialTerm> terms() const;
    std::size_t size() const noexcept { return terms_.size(); }

private:
    std::map<MonomialIndex, double> terms_;
};

/// E[sum_i c_i * monomial_i] under N(0, omega).
double displacement_moment(std::span<const PolynomialTerm> poly, const OmegaMatrix& omega);
double displacement_moment(const FieldPolynomial& poly, MomentCache& cache);

/// Expectations of field pairs weighted by a diagonal quadratic form
/// q = sum_a c_a lambda_a^2, in closed matrix form:
///   E[lambda lambda^T q]   = Omega tr(C Omega) + 2 Omega C Omega
///   E[lambda lambda^T q^2] = Omega (tr(C Omega)^2 + 2 tr(C Omega C Omega))
///                            + 4 tr(C Omega) Omega C Omega + 8 Omega C Omega C Omega
/// Both follow from pairing enumeration and are checked against it in tests.
struct QuadraticFormMoments {
    Eigen::MatrixXd pair_times_form;          ///< E[l_a l_b q]
    Eigen::MatrixXd pair_times_form_squared;  ///< E[l_a l_b q^2]
    double form_mean = 0.0;                   ///< E[q]
    double form_second_moment = 0.0;          ///< E[q^2]
};

QuadraticFormMoments quadratic_form_moments(const OmegaMatrix& omega, const Eigen::VectorXd& weights);

}  // namespace medlab
