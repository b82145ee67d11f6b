#pragma once

#include <stdexcept>
#include <string>

namespace bpskit {

// Error taxonomy mirrored by the CLI exit codes: config -> 2, numerical -> 3, io -> 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when an optional capability (e.g. analytic Hessian) is requested but absent.
struct UnsupportedError : std::logic_error {
    explicit UnsupportedError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace bpskit
