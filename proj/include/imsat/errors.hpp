#pragma once

#include <stdexcept>
#include <string>

namespace imsat {

// Invalid configuration: bad dimensions, bad hyper-parameters, infeasible setups.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible matrix/vector shapes.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// A vector that should be a probability distribution is not one.
struct DistributionError : std::runtime_error {
    explicit DistributionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation called in an invalid state (stale cache, wrong mode).
struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file. `where` carries a byte offset or row number when known.
struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, long long where = -1)
        : std::runtime_error(where >= 0 ? msg + " (at " + std::to_string(where) + ")" : msg),
          where(where) {}
    long long where;
};

// Semantically invalid input values (empty batch, zero best accuracy, ...).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace imsat
