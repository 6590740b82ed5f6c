#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace advrec {

/// Dense row-major table; rows are users (or items for item-major data).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

using ItemId = std::uint32_t;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or violated precondition. CLI exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed dataset line.
class ParseError : public ConfigError {
public:
    ParseError(const std::string& what, std::size_t line)
        : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Data that is well-formed but unusable (e.g. empty after filtering).
class DataError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Requested computation is not supported by the chosen model.
class CapabilityError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Non-finite values during training. CLI exit code 3.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, long step)
        : Error(what + (step >= 0 ? " (step " + std::to_string(step) + ")" : std::string())),
          step_(step) {}
    long step() const { return step_; }

private:
    long step_;
};

/// File system failure. CLI exit code 4.
class IoError : public Error {
public:
    using Error::Error;
};

/// Fill with N(0, std^2) draws.
void fill_normal(Matrix& m, double std, Rng& rng);

/// Deterministic sub-seed derivation (splitmix64 of seed + offset).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t offset);

bool all_finite(const Matrix& m);

}  // namespace advrec
