#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace eot {

// Exit codes of the CLI map onto these categories: validation (1),
// numerical (2), io (3).

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class MatrixError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DivergedChainError : public NumericalError {
public:
    DivergedChainError(std::size_t step, std::size_t chain, const std::string& detail,
                       std::int64_t iteration = -1);

    std::size_t step() const noexcept { return step_; }
    std::size_t chain() const noexcept { return chain_; }
    std::int64_t iteration() const noexcept { return iteration_; }

    DivergedChainError at_iteration(std::int64_t iteration) const;

private:
    std::size_t step_;
    std::size_t chain_;
    std::int64_t iteration_;
    std::string detail_;
};

class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, double violation)
        : NumericalError(what), violation_(violation) {}
    double violation() const noexcept { return violation_; }

private:
    double violation_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatVersionError : public IoError {
public:
    using IoError::IoError;
};

inline void require_shape(bool ok, const std::string& what) {
    if (!ok) {
        throw ShapeError(what);
    }
}

}  // namespace eot
