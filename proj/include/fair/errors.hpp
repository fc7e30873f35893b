#pragma once

#include <stdexcept>
#include <string>

namespace fair {

// Error taxonomy. The CLI maps these onto exit codes: config/data/contract
// problems exit 2, numeric divergence exits 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes or dimension mismatches.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration values (bad hyperparameters, inconsistent dims).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed input files, parse failures, format mismatches.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf divergence, undefined numeric operations.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Violated call contracts (non-scalar loss, fully masked row, bad target).
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

}  // namespace fair
