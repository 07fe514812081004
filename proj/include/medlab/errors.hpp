#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace medlab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Moment of degree above the pairing cap was requested.
class UnsupportedOrderError : public Error {
public:
    using Error::Error;
};

/// Overlap state or covariance matrix violates its invariants.
class InvalidStateError : public Error {
public:
    using Error::Error;
};

class UnsupportedConfigError : public Error {
public:
    using Error::Error;
};

class SizeError : public Error {
public:
    using Error::Error;
};

class IllConditionedInitError : public Error {
public:
    using Error::Error;
};

/// Deterministic integration left the admissible region.
class IntegrationBlowupError : public Error {
public:
    IntegrationBlowupError(std::size_t step, const std::string& what)
        : Error("integration blow-up at step " + std::to_string(step) + ": " + what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// A single Euler-Maruyama step produced an invalid state.
class StepRejectedError : public Error {
public:
    using Error::Error;
};

/// Explicit or reduced SGD produced non-finite weights.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t step, const std::string& what)
        : Error("SGD diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class NoCrossingError : public Error {
public:
    NoCrossingError(double final_ratio, const std::string& what)
        : Error(what), final_ratio_(final_ratio) {}
    /// Final excess risk divided by the initial excess risk.
    double final_ratio() const noexcept { return final_ratio_; }

private:
    double final_ratio_;
};

class UnstableRateError : public Error {
public:
    using Error::Error;
};

class DegenerateDiffusionError : public Error {
public:
    using Error::Error;
};

class PrecisionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace medlab
