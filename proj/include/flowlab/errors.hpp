#pragma once

#include <stdexcept>
#include <string>

namespace flowlab {

// Error taxonomy used across the library. CLI maps these onto exit codes.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error("domain error: " + msg) {}
};

struct SingularityError : std::runtime_error {
    explicit SingularityError(const std::string& msg) : std::runtime_error("singularity: " + msg) {}
};

struct NumericError : std::runtime_error {
    // index: offending coordinate when known, -1 otherwise
    NumericError(const std::string& msg, long index = -1)
        : std::runtime_error("numeric error: " + msg +
                             (index >= 0 ? " (index " + std::to_string(index) + ")" : "")),
          offending_index(index) {}
    long offending_index;
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

}  // namespace flowlab
