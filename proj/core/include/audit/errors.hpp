#pragma once

#include <stdexcept>
#include <string>

namespace audit {

// Error taxonomy shared by the whole library. The CLI maps these onto exit
// codes: ArgumentError/ConfigError/ShapeError are caller mistakes (exit 2),
// IoError/NumericError are runtime failures (exit 3).

struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Requested operation is outside what an engine supports (e.g. backward
// linear relaxation of a tanh layer). The message names the fallback.
struct CapabilityError : std::runtime_error {
    explicit CapabilityError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Nonfinite values or numerical breakdown (e.g. diverged training loss).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace audit
