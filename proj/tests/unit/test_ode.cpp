#include "medlab/errors.hpp"
#include "medlab/moments.hpp"
#include "medlab/ode.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace medlab;
using medlab::testing::random_free_state;
using medlab::testing::random_spherical_state;

namespace {

OverlapState p1_state(double m) {
    OverlapState s = OverlapState::orthogonal(1);
    s.m(0) = m;
    return s;
}

FieldPolynomial residual_poly(const OverlapState& s, double delta) {
    const int p = s.width();
    FieldPolynomial e = FieldPolynomial::monomial(1.0, {p, p});
    for (int j = 0; j < p; ++j) e += FieldPolynomial::monomial(-s.a(j) / p, {j, j});
    e += FieldPolynomial::monomial(std::sqrt(delta), {p + 1});
    return e;
}

}  // namespace

TEST_CASE("population risk closed values") {
    CHECK(population_risk(p1_state(1.0), 0.7) == doctest::Approx(0.35));
    CHECK(population_risk(p1_state(-1.0), 0.7) == doctest::Approx(0.35));
    CHECK(population_risk(p1_state(0.0), 0.4) == doctest::Approx(2.2));
    for (int p : {2, 3, 7}) CHECK(population_risk(OverlapState::orthogonal(p), 0.3) == doctest::Approx(1 + 1.0 / p + 0.15));
}

TEST_CASE("population risk equals half the mean squared residual") {
    std::mt19937_64 rng(11);
    for (int p : {1, 2, 4}) {
        for (int rep = 0; rep < 5; ++rep) {
            OverlapState s = random_free_state(p, rng);
            std::uniform_real_distribution<double> u(-1, 2);
            for (int j = 0; j < p; ++j) s.a(j) = u(rng);
            const double delta = 0.37;
            const OmegaMatrix om = s.omega().with_noise_field();
            MomentCache cache(om);
            const FieldPolynomial e = residual_poly(s, delta);
            CHECK(0.5 * displacement_moment(e * e, cache) == doctest::Approx(population_risk(s, delta)).epsilon(1e-12));
        }
    }
}

TEST_CASE("drift vanishes at the saddle and the minima") {
    TaskParams params;
    params.gamma = 0.07;
    params.delta = 0.3;
    for (int p : {1, 3}) {
        params.p = p;
        const Drift dr = drift(OverlapState::orthogonal(p), params);
        CHECK(dr.psi.cwiseAbs().maxCoeff() == 0.0);
        for (int j = 0; j < p; ++j)
            for (int l = 0; l < p; ++l)
                if (j != l) CHECK(dr.phi(j, l) == 0.0);
    }
    params.p = 1;
    params.delta = 0.0;
    for (double m : {1.0, -1.0}) {
        const OverlapRates r = overlap_rates(p1_state(m), params);
        CHECK(std::abs(r.dm(0)) < 1e-12);
        CHECK(std::abs(r.dQ(0, 0)) < 1e-12);
        const Drift dr = drift(p1_state(m), params);
        CHECK(std::abs(dr.psi(0)) < 1e-12);
        CHECK(std::abs(dr.phi(0, 0)) < 1e-12);
    }
}

TEST_CASE("moment drift equals the closed matrix form") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 0.3);
    for (int p : {1, 2, 3, 5}) {
        for (int rep = 0; rep < 25; ++rep) {
            TaskParams params;
            params.p = p;
            params.gamma = u(rng);
            params.delta = u(rng) * 3;
            const OverlapState s = rep % 2 == 0 ? random_spherical_state(p, rng) : random_free_state(p, rng);
            const Drift dr = drift(s, params);
            const OverlapRates mf = matrix_drift_a1(s, params);
            CHECK((dr.psi - mf.dm).cwiseAbs().maxCoeff() < 1e-10);
            CHECK((dr.phi - mf.dQ).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
    OverlapState s = OverlapState::orthogonal(2);
    s.a(1) = 0.5;
    CHECK_THROWS_AS(matrix_drift_a1(s, TaskParams{}), UnsupportedConfigError);
}

TEST_CASE("matrix form at the saddle has no teacher drift") {
    for (int p : {1, 4}) {
        TaskParams params;
        params.p = p;
        CHECK(matrix_drift_a1(OverlapState::orthogonal(p), params).dm.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("single neuron projected drift") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> um(-1, 1), ug(0, 0.16), ud(0, 2);
    for (int rep = 0; rep < 20; ++rep) {
        const double m = um(rng), gamma = ug(rng), delta = ud(rng);
        TaskParams params;
        params.gamma = gamma;
        params.delta = delta;
        const OverlapRates r = overlap_rates(p1_state(m), params);
        const double want = m * (4 * (1 - 6 * gamma) * (1 - m * m) - 2 * gamma * delta);
        CHECK(std::abs(r.dm(0) - want) < 1e-10);
        CHECK(r.dQ(0, 0) == 0.0);
    }
    TaskParams zero_gamma;
    zero_gamma.gamma = 0.0;
    const OverlapRates mf = matrix_drift_a1(p1_state(0.3), zero_gamma);
    const OverlapRates proj = spherical_project(mf.dm, mf.dQ, p1_state(0.3));
    CHECK(proj.dm(0) == doctest::Approx(4 * 0.3 * (1 - 0.09)).epsilon(1e-12));
}

TEST_CASE("spherical projection keeps the diagonal fixed") {
    std::mt19937_64 rng(14);
    const OverlapState s = random_spherical_state(4, rng);
    TaskParams params;
    params.p = 4;
    const Drift dr = drift(s, params);
    const OverlapRates r = spherical_project(dr.psi, dr.phi, s);
    for (int j = 0; j < 4; ++j) CHECK(r.dQ(j, j) == 0.0);
    const OverlapRates zero = spherical_project(Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Zero(4, 4), s);
    CHECK(zero.dm.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("integration from the exact saddle stays there") {
    TaskParams params;
    params.gamma = 0.1;
    params.delta = 1.0;
    const Trajectory tr = integrate(p1_state(0.0), params, {1e-2, 5.0, OdeScheme::rk4, 0});
    for (const auto& pt : tr.points()) CHECK(pt.state.m(0) == 0.0);
}

TEST_CASE("single neuron plateau") {
    TaskParams params;
    params.gamma = 0.1;
    params.delta = 1.0;
    const Trajectory tr = integrate(p1_state(0.1), params, {1e-3, 40.0, OdeScheme::rk4, 0});
    CHECK(excess_risk(tr.back().state, params.delta) == doctest::Approx(0.25).epsilon(1e-8));
    CHECK(tr.front().t == 0.0);
    for (const auto& pt : tr.points()) {
        CHECK(pt.state.Q(0, 0) == 1.0);
        CHECK(pt.risk == doctest::Approx(population_risk(pt.state, params.delta)).epsilon(1e-12));
    }
}

TEST_CASE("scheme order under step halving") {
    TaskParams params;
    params.gamma = 0.05;
    params.delta = 0.2;
    const OverlapState init = p1_state(0.05);
    auto final_m = [&](double dt, OdeScheme scheme) {
        return integrate(init, params, {dt, 1.0, scheme, 0}).back().state.m(0);
    };
    const double exact = final_m(1e-4, OdeScheme::rk4);
    const double e1 = std::abs(final_m(0.02, OdeScheme::euler) - exact);
    const double e2 = std::abs(final_m(0.01, OdeScheme::euler) - exact);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.1));
    const double r1 = std::abs(final_m(0.1, OdeScheme::rk4) - exact);
    const double r2 = std::abs(final_m(0.05, OdeScheme::rk4) - exact);
    CHECK(r1 / r2 == doctest::Approx(16.0).epsilon(0.2));
}

TEST_CASE("single neuron overlap grows monotonically below the stability bound") {
    TaskParams params;
    params.gamma = 0.12;
    const Trajectory tr = integrate(p1_state(0.01), params, {1e-3, 10.0, OdeScheme::rk4, 0});
    for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr.points()[i].state.m(0) >= tr.points()[i - 1].state.m(0));
}

TEST_CASE("wide spherical integration keeps unit diagonal") {
    std::mt19937_64 rng(15);
    TaskParams params;
    params.p = 3;
    params.gamma = 0.1;
    params.delta = 0.1;
    const Trajectory tr = integrate(random_spherical_state(3, rng, 40), params, {1e-3, 3.0, OdeScheme::rk4, 10});
    for (const auto& pt : tr.points())
        for (int j = 0; j < 3; ++j) CHECK(std::abs(pt.state.Q(j, j) - 1.0) < 1e-12);
}

TEST_CASE("trained second layer moves a") {
    TaskParams params;
    params.p = 2;
    params.train_a = true;
    OverlapState s = OverlapState::orthogonal(2);
    s.m << 0.2, -0.1;
    const Drift dr = drift(s, params);
    CHECK(dr.da.cwiseAbs().maxCoeff() > 0.0);
    params.train_a = false;
    CHECK(drift(s, params).da.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("initial overlaps") {
    const OverlapState o = init_overlaps(50, 3, InitMode::orthogonal_exact, 1);
    CHECK(o.m.cwiseAbs().maxCoeff() == 0.0);
    CHECK(o.Q.isIdentity());
    CHECK_THROWS_AS(init_overlaps(3, 3, InitMode::spherical_uniform, 1), IllConditionedInitError);

    const std::int64_t d = 200;
    double sum2 = 0.0;
    const int draws = 10000;
    for (int k = 0; k < draws; ++k) {
        const OverlapState s = init_overlaps(d, 1, InitMode::spherical_uniform, static_cast<std::uint64_t>(k));
        CHECK(s.Q(0, 0) == 1.0);
        sum2 += d * s.m(0) * s.m(0);
    }
    CHECK(sum2 / draws == doctest::Approx(1.0).epsilon(0.05));

    const OverlapState g = init_overlaps(5000, 2, InitMode::gaussian_unconstrained, 3);
    CHECK(g.Q(0, 0) == doctest::Approx(1.0).epsilon(0.1));
    CHECK(g.Q(0, 0) != 1.0);
}
