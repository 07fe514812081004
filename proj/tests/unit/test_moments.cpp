#include "medlab/diagnostics.hpp"
#include "medlab/errors.hpp"
#include "medlab/moments.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace medlab;
using medlab::testing::brute_force_pairings;
using medlab::testing::random_psd;

TEST_CASE("second moment equals the covariance entry") {
    std::mt19937_64 rng(1);
    const OmegaMatrix om(random_psd(4, rng));
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) CHECK(wick_moment({a, b}, om) == doctest::Approx(om(a, b)).epsilon(1e-14));
}

TEST_CASE("odd moments vanish exactly") {
    std::mt19937_64 rng(2);
    const OmegaMatrix om(random_psd(3, rng));
    CHECK(wick_moment({0, 0, 0}, om) == 0.0);
    CHECK(wick_moment({0, 1, 2, 2, 1}, om) == 0.0);
}

TEST_CASE("unit gaussian fourth and sixth moments") {
    const OmegaMatrix one(Eigen::MatrixXd::Identity(1, 1));
    CHECK(wick_moment({0, 0, 0, 0}, one) == 3.0);
    CHECK(sixth_moment_closed(0, 0, 0, 0, one) == 15.0);
    CHECK(wick_moment({0, 0, 0, 0, 0, 0}, one) == 15.0);
}

TEST_CASE("closed forms agree with pairing enumeration") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> pick(0, 3);
    for (int rep = 0; rep < 50; ++rep) {
        const Eigen::MatrixXd raw = random_psd(4, rng);
        const OmegaMatrix om(raw);
        const int a = pick(rng), b = pick(rng), c = pick(rng), d = pick(rng);
        CHECK(wick_moment({a, a, b, b}, om) ==
              doctest::Approx(raw(a, a) * raw(b, b) + 2 * raw(a, b) * raw(a, b)).epsilon(1e-12));
        CHECK(wick_moment({a, b, c, c}, om) ==
              doctest::Approx(raw(a, b) * raw(c, c) + 2 * raw(a, c) * raw(b, c)).epsilon(1e-12));
        CHECK(std::abs(sixth_moment_closed(a, b, c, d, om) - wick_moment({a, b, c, c, d, d}, om)) < 1e-12);
        CHECK(std::abs(wick_moment({a, b, c, c, d, d}, om) - brute_force_pairings({a, b, c, c, d, d}, raw)) < 1e-12);
    }
}

TEST_CASE("degree twelve is supported and thirteen is not") {
    const OmegaMatrix one(Eigen::MatrixXd::Identity(1, 1));
    CHECK(wick_moment(MonomialIndex{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, one) == 10395.0);
    std::vector<int> deg14(14, 0);
    CHECK_THROWS_AS(wick_moment(MonomialIndex(std::span<const int>(deg14)), one), UnsupportedOrderError);
}

TEST_CASE("pairing recursion matches brute force at high degree") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> pick(0, 4);
    for (int rep = 0; rep < 10; ++rep) {
        const Eigen::MatrixXd raw = random_psd(5, rng);
        const OmegaMatrix om(raw);
        std::vector<int> idx(10);
        for (int& f : idx) f = pick(rng);
        const double want = brute_force_pairings(idx, raw);
        CHECK(wick_moment(MonomialIndex(std::span<const int>(idx)), om) ==
              doctest::Approx(want).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("permutation leaves the moment bit-identical") {
    std::mt19937_64 rng(5);
    const OmegaMatrix om(random_psd(4, rng));
    std::vector<int> idx{0, 1, 1, 2, 3, 3, 0, 2};
    const double ref = wick_moment(MonomialIndex(std::span<const int>(idx)), om);
    for (int rep = 0; rep < 10; ++rep) {
        std::shuffle(idx.begin(), idx.end(), rng);
        CHECK(wick_moment(MonomialIndex(std::span<const int>(idx)), om) == ref);
    }
}

TEST_CASE("scaling the covariance scales a degree 2k moment by c^k") {
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd raw = random_psd(3, rng);
    const double c = 1.7;
    const OmegaMatrix om(raw), scaled(c * raw);
    const MonomialIndex idx{0, 1, 2, 2, 1, 1};
    CHECK(wick_moment(idx, scaled) == doctest::Approx(std::pow(c, 3) * wick_moment(idx, om)).epsilon(1e-12));
}

TEST_CASE("moments agree with Monte Carlo sampling") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> pick_deg(1, 4);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 3;
        const Eigen::MatrixXd raw = random_psd(n, rng);
        const Eigen::MatrixXd L = raw.llt().matrixL();
        std::uniform_int_distribution<int> pick(0, n - 1);
        std::vector<int> idx(2 * pick_deg(rng));
        for (int& f : idx) f = pick(rng);
        const double exact = wick_moment(MonomialIndex(std::span<const int>(idx)), OmegaMatrix(raw));

        const int samples = 1000000;
        double sum = 0.0, sum2 = 0.0;
        Eigen::VectorXd z(n);
        for (int s = 0; s < samples; ++s) {
            for (int i = 0; i < n; ++i) z(i) = g(rng);
            const Eigen::VectorXd lam = L * z;
            double prod = 1.0;
            for (int f : idx) prod *= lam(f);
            sum += prod;
            sum2 += prod * prod;
        }
        const double mean = sum / samples;
        const double se = std::sqrt((sum2 / samples - mean * mean) / samples);
        CHECK(std::abs(mean - exact) < 4.0 * se);
    }
}

TEST_CASE("displacement moment is linear") {
    std::mt19937_64 rng(8);
    const OmegaMatrix om(random_psd(3, rng));
    CHECK(displacement_moment(std::span<const PolynomialTerm>{}, om) == 0.0);
    const std::vector<PolynomialTerm> one{{5.0, MonomialIndex{0, 0}}};
    CHECK(displacement_moment(one, om) == doctest::Approx(5.0 * om(0, 0)));

    const std::vector<PolynomialTerm> poly{{2.0, {0, 1}}, {-1.5, {0, 0, 2, 2}}, {0.25, {1, 1, 1, 1, 2, 2}}};
    double separate = 0.0;
    for (const auto& t : poly) separate += displacement_moment(std::vector<PolynomialTerm>{t}, om);
    CHECK(displacement_moment(poly, om) == doctest::Approx(separate).epsilon(1e-14));
}

TEST_CASE("quadratic form identities match pairing enumeration") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 4;
        const Eigen::MatrixXd raw = random_psd(n, rng);
        const OmegaMatrix om(raw);
        Eigen::VectorXd c(n);
        for (int i = 0; i < n; ++i) c(i) = g(rng);
        const QuadraticFormMoments qm = quadratic_form_moments(om, c);
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                double e1 = 0.0, e2 = 0.0;
                for (int u = 0; u < n; ++u) {
                    e1 += c(u) * wick_moment({a, b, u, u}, om);
                    for (int v = 0; v < n; ++v) e2 += c(u) * c(v) * wick_moment({a, b, u, u, v, v}, om);
                }
                CHECK(qm.pair_times_form(a, b) == doctest::Approx(e1).epsilon(1e-12));
                CHECK(qm.pair_times_form_squared(a, b) == doctest::Approx(e2).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("covariance validation") {
    Eigen::MatrixXd asym(2, 2);
    asym << 1, 0.5, 0.4, 1;
    CHECK_THROWS_AS(OmegaMatrix{asym}, InvalidStateError);
    Eigen::MatrixXd neg(2, 2);
    neg << 1, 2, 2, 1;
    CHECK_THROWS_AS(OmegaMatrix{neg}, InvalidStateError);

    Eigen::MatrixXd marginal(2, 2);
    marginal << 1, 1 + 1e-8, 1 + 1e-8, 1;
    WarningCapture capture;
    const OmegaMatrix om(marginal);
    CHECK(capture.messages().size() == 1);
    CHECK(om.matrix().selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() > -1e-12);
}
