#include "medlab/landscape.hpp"

#include "medlab/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace medlab {

namespace {

constexpr double kRoleTol = 1e-12;

// Spectrum of b I + A on R^d where A acts on span{w, w*} as the 2x2 matrix
// `block` in the (w, w*) coefficient basis with Gram matrix `gram`.
std::vector<Eigenvalue> rank_two_spectrum(double b, const Eigen::Matrix2d& block, const Eigen::Matrix2d& gram) {
    std::vector<Eigenvalue> out;
    const double scale = std::max({1.0, gram.cwiseAbs().maxCoeff()});
    const double det = gram.determinant();
    if (det > 1e-12 * scale * scale) {
        out.push_back({b, {true, 2}, "bulk"});
        // block is similar to a symmetric matrix through the Gram factor, so its
        // spectrum is real.
        Eigen::EigenSolver<Eigen::Matrix2d> es(block);
        for (int k = 0; k < 2; ++k) {
            const double lam = es.eigenvalues()(k).real();
            const Eigen::Vector2d v = es.eigenvectors().col(k).real();
            std::string role = "span{w, w*}";
            if (std::abs(v(1)) <= kRoleTol * v.norm()) role = "along w";
            else if (std::abs(v(0)) <= kRoleTol * v.norm()) role = "along w*";
            out.push_back({b + lam, {false, 1}, role});
        }
        return out;
    }
    out.push_back({b, {true, 1}, "bulk"});
    const double gss = gram(1, 1);
    const double c = gss > 0.0 ? gram(0, 1) / gss : 0.0;
    // A w* = block(0,1) w + block(1,1) w* = (block(0,1) c + block(1,1)) w*.
    out.push_back({b + block(0, 1) * c + block(1, 1), {false, 1}, "along w*"});
    return out;
}

// Folds rank-two eigenvalues equal to the bulk value into the bulk multiplicity.
std::vector<Eigenvalue> merge_with_bulk(std::vector<Eigenvalue> spec) {
    Eigenvalue& bulk = spec.front();
    std::vector<Eigenvalue> out{bulk};
    for (std::size_t k = 1; k < spec.size(); ++k) {
        if (std::abs(spec[k].value - bulk.value) <= 1e-12 * std::max(1.0, std::abs(bulk.value))) {
            --out.front().multiplicity.constant;
        } else {
            out.push_back(spec[k]);
        }
    }
    return out;
}

void check_finite(double x, const char* name) {
    if (!std::isfinite(x)) throw InvalidStateError(std::string(name) + " must be finite");
}

}  // namespace

void GeometryPoint::validate() const {
    check_finite(m, "m");
    check_finite(q, "q");
    check_finite(rho, "rho");
    check_finite(delta, "delta");
    if (q < 0.0) throw InvalidStateError("q must be non-negative");
    if (rho <= 0.0) throw InvalidStateError("rho must be positive");
    if (delta < 0.0) throw InvalidStateError("delta must be non-negative");
    if (m * m > q * rho + 1e-10) throw InvalidStateError("m^2 exceeds q rho");
}

std::string Multiplicity::to_string() const {
    if (!scales_with_d) return std::to_string(constant);
    return constant == 0 ? "d" : "d-" + std::to_string(constant);
}

std::string to_string(CriticalKind kind) {
    switch (kind) {
        case CriticalKind::maximum: return "maximum";
        case CriticalKind::strict_saddle: return "strict-saddle";
        case CriticalKind::minimum: return "minimum";
    }
    return "unknown";
}

double risk_euclidean(const GeometryPoint& pt) {
    pt.validate();
    const double m = pt.m, q = pt.q, r = pt.rho;
    return 0.5 * pt.delta + 3.0 * r * r + 3.0 * q * q - 4.0 * m * m - 2.0 * r * q;
}

double risk_spherical(double m, double delta) {
    if (std::abs(m) > 1.0 + 1e-12) throw InvalidStateError("spherical overlap must satisfy |m| <= 1");
    return 0.5 * delta + 2.0 * (1.0 - m * m);
}

EuclideanGeometry euclidean_gradient_spectrum(const GeometryPoint& pt) {
    pt.validate();
    const double m = pt.m, q = pt.q, r = pt.rho;
    EuclideanGeometry g;
    g.grad_w = -2.0 * (r - 3.0 * q);
    g.grad_star = -4.0 * m;
    // |c_w w + c_* w*|^2 / d with |w|^2 = q d, |w*|^2 = rho d, w . w* = m d.
    g.grad_norm2 = g.grad_w * g.grad_w * q + g.grad_star * g.grad_star * r + 2.0 * g.grad_w * g.grad_star * m;
    Eigen::Matrix2d gram;
    gram << q / r, m / r, m / r, 1.0;
    Eigen::Matrix2d block;
    block << 6.0 * gram(0, 0), 6.0 * gram(0, 1), -2.0 * gram(1, 0), -2.0 * gram(1, 1);
    g.spectrum = merge_with_bulk(rank_two_spectrum(2.0 * (3.0 * q - r), block, gram));
    return g;
}

std::pair<double, double> overlap_gradient(const GeometryPoint& pt) {
    const EuclideanGeometry g = euclidean_gradient_spectrum(pt);
    return {2.0 * g.grad_star, g.grad_w};
}

SphericalGeometry spherical_gradient_hessian(double m, double delta) {
    (void)risk_spherical(m, delta);
    SphericalGeometry g;
    g.grad_w = 4.0 * m * m;
    g.grad_star = -4.0 * m;
    Eigen::Matrix2d gram;
    gram << 1.0, m, m, 1.0;
    // 4 m w w*^T - 4 w* w*^T applied to a w + b w*: (a m + b)(4m w - 4 w*).
    Eigen::Matrix2d block;
    block << 4.0 * m * m, 4.0 * m, -4.0 * m, -4.0;
    g.spectrum = merge_with_bulk(rank_two_spectrum(4.0 * m * m, block, gram));
    return g;
}

CriticalKind kind_from_spectrum(const std::vector<Eigenvalue>& spectrum, double tol) {
    bool neg = false, pos = false, zero = false;
    for (const Eigenvalue& e : spectrum) {
        if (e.multiplicity.at(1000000) <= 0) continue;
        if (e.value < -tol) neg = true;
        else if (e.value > tol) pos = true;
        else zero = true;
    }
    if (neg && !pos && !zero) return CriticalKind::maximum;
    if (pos && !neg && !zero) return CriticalKind::minimum;
    if (neg) return CriticalKind::strict_saddle;
    throw InvalidStateError("spectrum has flat directions and no negative curvature");
}

std::vector<CriticalPoint> classify_critical_points(double rho, double delta) {
    if (!(rho > 0.0)) throw ConfigError("rho must be positive");
    if (delta < 0.0) throw ConfigError("Delta must be non-negative");
    std::vector<CriticalPoint> out;
    const double tol = 1e-12 * std::max(1.0, rho * rho * rho);
    for (const auto& [m, q] : std::vector<std::pair<double, double>>{{0.0, 0.0}, {0.0, rho / 3.0}, {rho, rho}, {-rho, rho}}) {
        CriticalPoint c;
        c.setting = "euclidean";
        c.location = GeometryPoint{m, q, rho, delta};
        const EuclideanGeometry g = euclidean_gradient_spectrum(c.location);
        if (g.grad_norm2 > tol) throw InvalidStateError("euclidean gradient does not vanish at a listed critical point");
        c.grad_norm2 = g.grad_norm2;
        c.spectrum = g.spectrum;
        c.kind = kind_from_spectrum(g.spectrum, 1e-12 * std::max(1.0, rho));
        c.risk = risk_euclidean(c.location);
        out.push_back(c);
    }
    for (double m : {0.0, 1.0, -1.0}) {
        CriticalPoint c;
        c.setting = "spherical";
        c.location = GeometryPoint{m, 1.0, 1.0, delta};
        const SphericalGeometry g = spherical_gradient_hessian(m, delta);
        // |4m^2 w - 4m w*|^2 / d on the unit-overlap sphere.
        c.grad_norm2 = g.grad_w * g.grad_w + g.grad_star * g.grad_star + 2.0 * g.grad_w * g.grad_star * m;
        if (c.grad_norm2 > 1e-12) throw InvalidStateError("spherical gradient does not vanish at a listed critical point");
        c.spectrum = g.spectrum;
        c.kind = kind_from_spectrum(g.spectrum);
        c.risk = risk_spherical(m, delta);
        c.global_maximum = m == 0.0;
        out.push_back(c);
    }
    return out;
}

nlohmann::json to_json(const CriticalPoint& point) {
    nlohmann::json spectrum = nlohmann::json::array();
    for (const Eigenvalue& e : point.spectrum)
        spectrum.push_back({{"eigenvalue", e.value}, {"multiplicity", e.multiplicity.to_string()}, {"role", e.role}});
    return {{"setting", point.setting},
            {"m", point.location.m},
            {"q", point.location.q},
            {"rho", point.location.rho},
            {"delta", point.location.delta},
            {"kind", to_string(point.kind)},
            {"global_maximum", point.global_maximum},
            {"risk", point.risk},
            {"grad_norm2", point.grad_norm2},
            {"spectrum", spectrum}};
}

FieldP1 unconstrained_ode_field_p1(double m, double q, double rho, double gamma) {
    FieldP1 f;
    f.dm = 6.0 * m * (rho - q);
    f.dq = 4.0 * (q * (rho - 3.0 * q) + 2.0 * m * m) +
           12.0 * gamma * (q * (rho * rho + 5.0 * q * q - 2.0 * rho * q) + 4.0 * m * m * (rho - 2.0 * q));
    return f;
}

}  // namespace medlab
