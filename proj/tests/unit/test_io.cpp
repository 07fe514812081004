#include "medlab/errors.hpp"
#include "medlab/io.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace medlab;

namespace {

Trajectory sample_trajectory(int p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TrajectoryMeta meta;
    meta.params.p = p;
    meta.params.d = 3000;
    meta.params.gamma = 0.1;
    meta.params.delta = 0.1;
    meta.dt = 1e-3;
    meta.scheme = "rk4";
    meta.seed = 42;
    Trajectory traj(meta);
    for (int k = 0; k < 5; ++k) traj.append(0.1 * k + 1e-17 * k, medlab::testing::random_spherical_state(p, rng));
    return traj;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("trajectory header") {
    const auto h = trajectory_csv_header(2);
    const std::vector<std::string> want{"t", "risk", "m_1", "m_2", "Q_1_1", "Q_1_2", "Q_2_2", "a_1", "a_2"};
    CHECK(h == want);
}

TEST_CASE("trajectory csv round trip is exact") {
    for (int p : {1, 3}) {
        const Trajectory traj = sample_trajectory(p, 5 + p);
        std::stringstream ss;
        write_trajectory_csv(ss, traj);
        const std::string text = ss.str();
        CHECK(text.rfind("# scheme=rk4,seed=42,", 0) == 0);
        const Trajectory back = read_trajectory_csv(ss);
        REQUIRE(back.size() == traj.size());
        CHECK(back.meta().params.p == p);
        CHECK(back.meta().params.d == 3000);
        CHECK(back.meta().params.gamma == 0.1);
        CHECK(back.meta().seed == std::optional<std::uint64_t>(42));
        for (std::size_t k = 0; k < traj.size(); ++k) {
            const auto& a = traj.points()[k];
            const auto& b = back.points()[k];
            CHECK(a.t == b.t);
            CHECK(a.risk == b.risk);
            CHECK(a.state.m == b.state.m);
            CHECK(a.state.Q == b.state.Q);
            CHECK(a.state.a == b.state.a);
        }
        std::stringstream again;
        write_trajectory_csv(again, back);
        CHECK(again.str() == text);
    }
}

TEST_CASE("trajectory csv without metadata") {
    std::stringstream ss("t,risk,m_1,Q_1_1,a_1\n0,1.5,0.25,1,1\n0.5,1.25,0.5,1,1\n");
    const Trajectory traj = read_trajectory_csv(ss);
    REQUIRE(traj.size() == 2);
    CHECK(traj.back().state.m(0) == 0.5);
    CHECK(traj.back().risk == 1.25);
    CHECK_FALSE(traj.meta().seed.has_value());
}

TEST_CASE("malformed trajectory csv") {
    const std::vector<std::string> bad{
        "",
        "t,risk,m_1,Q_1_1\n0,1,0,1\n",
        "t,risk,m_1,Q_1_1,a_1\n0,1,0,1\n",
        "t,risk,m_1,Q_1_1,a_1\n0,1,zero,1,1\n",
        "t,risk,m_1,Q_1_1,a_1\n1,1,0,1,1\n0,1,0,1,1\n",
    };
    for (const std::string& text : bad) {
        std::stringstream ss(text);
        CHECK_THROWS_AS(read_trajectory_csv(ss), ConfigError);
    }
    CHECK_THROWS_AS(read_trajectory_csv(std::filesystem::path("/nonexistent/traj.csv")), ConfigError);
}

TEST_CASE("series and column files") {
    const auto dir = std::filesystem::temp_directory_path() / "medlab_test_io";
    std::filesystem::create_directories(dir);
    Series s;
    s.x_name = "t";
    s.y_name = "risk";
    s.x = {0.0, 0.5};
    s.y = {1.0, 0.1};
    write_series_csv(dir / "a.csv", s);
    CHECK(slurp(dir / "a.csv") == "t,risk\n0,1\n0.5,0.10000000000000001\n");
    s.y_err = {0.0, 0.25};
    write_series_csv(dir / "b.csv", s);
    CHECK(slurp(dir / "b.csv") == "t,risk,risk_err\n0,1,0\n0.5,0.10000000000000001,0.25\n");
    write_columns_csv(dir / "c.csv", {"p", "x", "y"}, {{1, 2}, {3, 4}, {5, 6}});
    CHECK(slurp(dir / "c.csv") == "p,x,y\n1,3,5\n2,4,6\n");
    CHECK_THROWS_AS(write_columns_csv(dir / "d.csv", {"p", "x"}, {{1, 2}, {3}}), ConfigError);
    std::filesystem::remove_all(dir);
}
