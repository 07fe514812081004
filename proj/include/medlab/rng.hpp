#pragma once

// Seeded random streams.
//
// Every stochastic routine draws from a std::mt19937_64 seeded through
// std::seed_seq with the words (seed_lo, seed_hi, stream_lo, stream_hi, purpose).
// The stream index is the ensemble member (path, seed offset or Monte Carlo
// chunk) and the purpose tag separates independent uses of the same member,
// so results never depend on which worker ran which member.

#include <boost/random/chi_squared_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <cstdint>
#include <random>
#include <span>

namespace medlab {

enum class StreamPurpose : std::uint32_t {
    data = 1,
    init = 2,
    sde_noise = 3,
    monte_carlo = 4,
    teacher = 5,
    ou_paths = 6,
};

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream, StreamPurpose purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(purpose)};
    return Engine(seq);
}

/// Standard normal draws (ziggurat) from a dedicated engine.
class NormalSource {
public:
    NormalSource(std::uint64_t seed, std::uint64_t stream, StreamPurpose purpose)
        : engine_(make_engine(seed, stream, purpose)) {}

    double operator()() { return normal_(engine_); }

    void fill(std::span<double> out) {
        for (double& x : out) x = normal_(engine_);
    }

    /// Chi-square variate with k degrees of freedom.
    double chi_squared(double k) {
        boost::random::chi_squared_distribution<double> chi(k);
        return chi(engine_);
    }

    double uniform() { return uniform_(engine_); }

    Engine& engine() noexcept { return engine_; }

private:
    Engine engine_;
    boost::random::normal_distribution<double> normal_;
    boost::random::uniform_01<double> uniform_;
};

}  // namespace medlab
