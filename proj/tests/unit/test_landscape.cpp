#include "medlab/errors.hpp"
#include "medlab/landscape.hpp"
#include "medlab/moments.hpp"
#include "medlab/ode.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

using namespace medlab;

namespace {

// Eigenvalues of the spectrum expanded at dimension d, sorted.
std::vector<double> expand(const std::vector<Eigenvalue>& spec, int d) {
    std::vector<double> out;
    for (const Eigenvalue& e : spec)
        for (long long k = 0; k < e.multiplicity.at(d); ++k) out.push_back(e.value);
    std::sort(out.begin(), out.end());
    return out;
}

// Explicit unit vector theta and u with |u|^2 = g_uu, u . theta = g_ut in R^d.
std::pair<Eigen::VectorXd, Eigen::VectorXd> explicit_pair(int d, double g_uu, double g_ut) {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d), u = Eigen::VectorXd::Zero(d);
    theta(0) = 1.0;
    u(0) = g_ut;
    u(1) = std::sqrt(std::max(0.0, g_uu - g_ut * g_ut));
    return {theta, u};
}

std::vector<double> sorted_real_eigenvalues(const Eigen::MatrixXd& H) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(H);
    std::vector<double> out;
    for (int k = 0; k < H.rows(); ++k) {
        CHECK(std::abs(es.eigenvalues()(k).imag()) < 1e-10);
        out.push_back(es.eigenvalues()(k).real());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void check_same(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(tol).scale(1.0));
}

const CriticalPoint& find(const std::vector<CriticalPoint>& pts, const std::string& setting, double m, double q) {
    for (const CriticalPoint& c : pts)
        if (c.setting == setting && c.location.m == m && c.location.q == q) return c;
    FAIL("critical point not found");
    return pts.front();
}

}  // namespace

TEST_CASE("euclidean risk values") {
    for (double rho : {0.5, 1.0, 2.0})
        for (double D : {0.0, 0.7}) {
            CHECK(risk_euclidean({rho, rho, rho, D}) == doctest::Approx(D / 2.0));
            CHECK(risk_euclidean({0.0, 0.0, rho, D}) == doctest::Approx(D / 2.0 + 3.0 * rho * rho));
            // 3 rho^2 + 3 (rho/3)^2 - 2 rho (rho/3) = 8/3 rho^2
            CHECK(risk_euclidean({0.0, rho / 3.0, rho, D}) == doctest::Approx(D / 2.0 + 8.0 / 3.0 * rho * rho));
        }
    CHECK_THROWS_AS(risk_euclidean({1.0, 0.5, 1.0, 0.0}), InvalidStateError);
}

TEST_CASE("euclidean excess risk is the mean squared noiseless residual") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.2, 2.0);
    for (int k = 0; k < 20; ++k) {
        const double rho = pos(rng), q = k == 0 ? rho / 3.0 : pos(rng);
        const double m = k == 0 ? 0.0 : u(rng) * std::sqrt(q * rho);
        Eigen::MatrixXd om(2, 2);
        om << q, m, m, rho;
        const OmegaMatrix omega(om);
        MomentCache cache(omega);
        const FieldPolynomial e = FieldPolynomial::monomial(1.0, {1, 1}) - FieldPolynomial::monomial(1.0, {0, 0});
        CHECK(risk_euclidean({m, q, rho, 0.0}) == doctest::Approx(displacement_moment(e * e, cache)).epsilon(1e-12));
    }
}

TEST_CASE("euclidean and spherical risks differ by a factor two on the unit sphere") {
    for (double D : {0.0, 0.4})
        for (int k = 0; k <= 20; ++k) {
            const double m = -1.0 + 0.1 * k;
            const double e = risk_euclidean({m, 1.0, 1.0, D}) - D / 2.0;
            const double s = risk_spherical(m, D) - D / 2.0;
            CHECK(e == doctest::Approx(2.0 * s).scale(1.0));
            CHECK(risk_spherical(0.0, D) >= risk_spherical(m, D));
        }
    CHECK(risk_spherical(1.0, 0.4) == doctest::Approx(0.2));
}

TEST_CASE("euclidean spectra at the printed points") {
    const double rho = 1.3;
    const EuclideanGeometry at0 = euclidean_gradient_spectrum({0.0, 0.0, rho, 0.0});
    CHECK(at0.grad_norm2 == 0.0);
    check_same(expand(at0.spectrum, 9), [&] {
        std::vector<double> v(8, -2.0 * rho);
        v.insert(v.begin(), -2.0 * (rho + 1.0));
        return v;
    }(), 1e-12);

    const EuclideanGeometry sad = euclidean_gradient_spectrum({0.0, rho / 3.0, rho, 0.0});
    const std::vector<double> s = expand(sad.spectrum, 9);
    CHECK(s.front() < 0.0);
    CHECK(s.back() > 0.0);
    CHECK(std::count_if(s.begin(), s.end(), [](double x) { return std::abs(x) < 1e-12; }) == 7);

    const EuclideanGeometry mn = euclidean_gradient_spectrum({rho, rho, rho, 0.0});
    check_same(expand(mn.spectrum, 9), [&] {
        std::vector<double> v(8, 4.0 * rho);
        v.push_back(4.0 * (rho + 1.0));
        return v;
    }(), 1e-12);
}

TEST_CASE("rank-two spectra agree with explicit d x d Hessians") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.2, 2.0);
    const int d = 7;
    for (int k = 0; k < 30; ++k) {
        const double rho = pos(rng), q = pos(rng);
        const double m = u(rng) * std::sqrt(q * rho);
        const auto [theta, w] = explicit_pair(d, q / rho, m / rho);
        const Eigen::MatrixXd H = 2.0 * (-(rho - 3.0 * q) * Eigen::MatrixXd::Identity(d, d) + 3.0 * w * w.transpose() -
                                         theta * theta.transpose());
        check_same(expand(euclidean_gradient_spectrum({m, q, rho, 0.0}).spectrum, d), sorted_real_eigenvalues(H), 1e-10);

        const double ms = u(rng);
        const auto [th, ws] = explicit_pair(d, 1.0, ms);
        const Eigen::MatrixXd Hs =
            4.0 * (ms * ms * Eigen::MatrixXd::Identity(d, d) + ms * ws * th.transpose() - th * th.transpose());
        check_same(expand(spherical_gradient_hessian(ms, 0.0).spectrum, d), sorted_real_eigenvalues(Hs), 1e-10);
    }
}

TEST_CASE("spherical gradient and Hessian") {
    const SphericalGeometry g0 = spherical_gradient_hessian(0.0, 0.0);
    CHECK(g0.grad_w == 0.0);
    CHECK(g0.grad_star == 0.0);
    REQUIRE(g0.spectrum.size() == 2);
    CHECK(g0.spectrum[0].value == 0.0);
    CHECK(g0.spectrum[0].multiplicity.to_string() == "d-1");
    CHECK(g0.spectrum[1].value == -4.0);
    CHECK(g0.spectrum[1].role == "along w*");

    for (double m : {1.0, -1.0}) {
        const SphericalGeometry g = spherical_gradient_hessian(m, 0.0);
        REQUIRE(g.spectrum.size() == 1);
        CHECK(g.spectrum[0].value == 4.0);
        CHECK(g.spectrum[0].multiplicity.to_string() == "d");
    }
    const SphericalGeometry h = spherical_gradient_hessian(0.5, 0.0);
    CHECK(h.grad_w == 1.0);
    CHECK(h.grad_star == -2.0);
    check_same(expand(h.spectrum, 6), {-2.0, 1.0, 1.0, 1.0, 1.0, 1.0}, 1e-12);
}

TEST_CASE("critical point classification") {
    for (double rho : {0.5, 1.0, 3.0}) {
        for (double D : {0.0, 0.5}) {
            const auto pts = classify_critical_points(rho, D);
            REQUIRE(pts.size() == 7);
            const CriticalPoint& mx = find(pts, "euclidean", 0.0, 0.0);
            const CriticalPoint& sd = find(pts, "euclidean", 0.0, rho / 3.0);
            const CriticalPoint& mp = find(pts, "euclidean", rho, rho);
            const CriticalPoint& mm = find(pts, "euclidean", -rho, rho);
            CHECK(mx.kind == CriticalKind::maximum);
            CHECK(sd.kind == CriticalKind::strict_saddle);
            CHECK(mp.kind == CriticalKind::minimum);
            CHECK(mm.kind == CriticalKind::minimum);
            CHECK(mx.risk == doctest::Approx(D / 2.0 + 3.0 * rho * rho));
            CHECK(sd.risk == doctest::Approx(D / 2.0 + 8.0 / 3.0 * rho * rho));
            CHECK(mp.risk == doctest::Approx(D / 2.0));
            CHECK(mp.risk < sd.risk);
            CHECK(sd.risk < mx.risk);
            CHECK(mx.spectrum[0].multiplicity.to_string() == "d-1");
            CHECK(sd.spectrum[0].multiplicity.to_string() == "d-2");
            CHECK(mp.spectrum[0].multiplicity.to_string() == "d-1");
            for (const CriticalPoint& c : pts) CHECK(c.grad_norm2 <= 1e-12);

            const CriticalPoint& s0 = find(pts, "spherical", 0.0, 1.0);
            CHECK(s0.kind == CriticalKind::strict_saddle);
            CHECK(s0.global_maximum);
            CHECK(find(pts, "spherical", 1.0, 1.0).kind == CriticalKind::minimum);
            CHECK(find(pts, "spherical", -1.0, 1.0).kind == CriticalKind::minimum);
        }
    }
    const auto j = to_json(classify_critical_points(1.0, 0.0)[1]);
    CHECK(j.at("kind") == "strict-saddle");
    CHECK(j.at("spectrum").at(0).at("multiplicity") == "d-2");
}

TEST_CASE("kind from spectrum") {
    CHECK(kind_from_spectrum({{-1.0, {true, 1}, "bulk"}, {-2.0, {false, 1}, "along w*"}}) == CriticalKind::maximum);
    CHECK(kind_from_spectrum({{1.0, {true, 0}, "bulk"}}) == CriticalKind::minimum);
    CHECK(kind_from_spectrum({{0.0, {true, 1}, "bulk"}, {-4.0, {false, 1}, "along w*"}}) == CriticalKind::strict_saddle);
    CHECK_THROWS_AS(kind_from_spectrum({{0.0, {true, 1}, "bulk"}, {4.0, {false, 1}, "along w*"}}), InvalidStateError);
}

TEST_CASE("finite-difference gradient in overlap space") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-0.9, 0.9), pos(0.3, 2.0);
    const double h = 1e-5;
    for (int k = 0; k < 50; ++k) {
        const double rho = pos(rng), q = pos(rng), m = u(rng) * std::sqrt(q * rho), D = 0.3;
        const auto [dm, dq] = overlap_gradient({m, q, rho, D});
        const double fm = (risk_euclidean({m + h, q, rho, D}) - risk_euclidean({m - h, q, rho, D})) / (2.0 * h);
        const double fq = (risk_euclidean({m, q + h, rho, D}) - risk_euclidean({m, q - h, rho, D})) / (2.0 * h);
        CHECK(std::abs(fm - dm) < 1e-6);
        CHECK(std::abs(fq - dq) < 1e-6);
    }
}

TEST_CASE("unconstrained single-neuron field") {
    CHECK(unconstrained_ode_field_p1(0.0, 1.0 / 3.0, 1.0, 0.0).dm == 0.0);
    CHECK(std::abs(unconstrained_ode_field_p1(0.0, 1.0 / 3.0, 1.0, 0.0).dq) < 1e-15);
    CHECK(unconstrained_ode_field_p1(0.0, 0.7, 1.0, 0.2).dm == 0.0);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.9, 0.9), pos(0.3, 2.0), ug(0.0, 0.3);
    for (int k = 0; k < 20; ++k) {
        const double rho = pos(rng), q = pos(rng), m = u(rng) * std::sqrt(q * rho), g = ug(rng);
        OverlapState s;
        s.a = Eigen::VectorXd::Ones(1);
        s.m = Eigen::VectorXd::Constant(1, m);
        s.Q = Eigen::MatrixXd::Constant(1, 1, q);
        s.rho = rho;
        TaskParams P;
        P.gamma = g;
        P.spherical = false;
        const OverlapRates r = matrix_drift_a1(s, P);
        const FieldP1 f = unconstrained_ode_field_p1(m, q, rho, g);
        CHECK(f.dm == doctest::Approx(r.dm(0)).epsilon(1e-10).scale(1.0));
        CHECK(f.dq == doctest::Approx(r.dQ(0, 0)).epsilon(1e-10).scale(1.0));
    }

    for (double rho : {0.5, 1.0, 2.0})
        for (const CriticalPoint& c : classify_critical_points(rho, 0.0)) {
            if (c.setting != "euclidean") continue;
            const FieldP1 f = unconstrained_ode_field_p1(c.location.m, c.location.q, rho, 0.0);
            CHECK(std::abs(f.dm) < 1e-12);
            CHECK(std::abs(f.dq) < 1e-12);
        }
}
