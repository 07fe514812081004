#pragma once

// Population-risk geometry of a single quadratic neuron in overlap coordinates.
//
// Euclidean risk R(m, q) = Delta/2 + 3 rho^2 + 3 q^2 - 4 m^2 - 2 rho q with
// gradient -2((rho - 3q) w + 2m w*) and Hessian 2(-(rho - 3q) I + 3 w w^T - w* w*^T).
// Spherical risk R(m) = Delta/2 + 2(1 - m^2) with gradient 4m(m w - w*) and
// Hessian 4[m^2 I + m w w*^T - w* w*^T]. Hessian spectra are obtained from the
// identity-plus-rank-two structure on span{w, w*}; the rank-two part is evaluated
// with w* of unit norm and w scaled by the same factor, so <w, w> = q/rho,
// <w, w*> = m/rho, <w*, w*> = 1.

#include <json.hpp>

#include <string>
#include <vector>

namespace medlab {

struct GeometryPoint {
    double m = 0.0;
    double q = 1.0;
    double rho = 1.0;
    double delta = 0.0;

    /// Throws InvalidStateError unless q >= 0, rho > 0, delta >= 0 and m^2 <= q rho + 1e-10.
    void validate() const;
};

/// Multiplicity of an eigenvalue in dimension d: `constant` if !scales_with_d,
/// otherwise d - constant.
struct Multiplicity {
    bool scales_with_d = false;
    int constant = 1;

    long long at(long long d) const noexcept { return scales_with_d ? d - constant : constant; }
    std::string to_string() const;
};

struct Eigenvalue {
    double value = 0.0;
    Multiplicity multiplicity;
    std::string role;  ///< "bulk", "along w", "along w*" or "span{w, w*}"
};

enum class CriticalKind { maximum, strict_saddle, minimum };

std::string to_string(CriticalKind kind);

double risk_euclidean(const GeometryPoint& pt);

/// Delta/2 + 2(1 - m^2).
double risk_spherical(double m, double delta);

struct EuclideanGeometry {
    double grad_w = 0.0;       ///< coefficient of w in the gradient, -2(rho - 3q)
    double grad_star = 0.0;    ///< coefficient of w*, -4m
    double grad_norm2 = 0.0;   ///< |grad R|^2 / d
    std::vector<Eigenvalue> spectrum;
};

EuclideanGeometry euclidean_gradient_spectrum(const GeometryPoint& pt);

/// (dR/dm, dR/dq) implied by the gradient coefficients: (2 grad_star, grad_w).
std::pair<double, double> overlap_gradient(const GeometryPoint& pt);

struct SphericalGeometry {
    double grad_w = 0.0;     ///< 4 m^2
    double grad_star = 0.0;  ///< -4 m
    std::vector<Eigenvalue> spectrum;
};

SphericalGeometry spherical_gradient_hessian(double m, double delta);

struct CriticalPoint {
    std::string setting;  ///< "euclidean" or "spherical"
    GeometryPoint location;
    CriticalKind kind = CriticalKind::strict_saddle;
    double risk = 0.0;
    double grad_norm2 = 0.0;
    std::vector<Eigenvalue> spectrum;
    bool global_maximum = false;
};

/// Kind implied by eigenvalue signs: all negative gives a maximum, all positive
/// a minimum, anything else (with at least one negative) a strict saddle.
/// Eigenvalues within tol of zero count as zero. Throws InvalidStateError for
/// a spectrum with zeros and no negative direction.
CriticalKind kind_from_spectrum(const std::vector<Eigenvalue>& spectrum, double tol = 1e-12);

/// Euclidean critical set {(0, 0), (0, rho/3), (rho, rho), (-rho, rho)} and
/// spherical critical set {m = 0, m = 1, m = -1}. Locations are closed forms;
/// kinds are derived from the spectra and the gradient is checked to vanish
/// (InvalidStateError otherwise).
std::vector<CriticalPoint> classify_critical_points(double rho, double delta);

nlohmann::json to_json(const CriticalPoint& point);

struct FieldP1 {
    double dm = 0.0;
    double dq = 0.0;
};

/// Unconstrained single-neuron flow at Delta = 0:
/// dm/dt = 6 m (rho - q),
/// dq/dt = 4(q(rho - 3q) + 2m^2) + 12 gamma (q(rho^2 + 5q^2 - 2 rho q) + 4 m^2 (rho - 2q)).
FieldP1 unconstrained_ode_field_p1(double m, double q, double rho, double gamma);

}  // namespace medlab
