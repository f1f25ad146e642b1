#pragma once

#include <stdexcept>
#include <string>

namespace scope {

// Shape or dimensionality mismatch between operands.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Mathematically invalid input (degenerate box, non-finite value, ...).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or inconsistent configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Scenario synthesis could not satisfy its constraints.
struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Gradient verification could not be carried out.
struct CheckError : std::runtime_error {
    explicit CheckError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file or stream.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Optimization diverged or produced non-finite values.
struct TrainError : std::runtime_error {
    explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace scope
