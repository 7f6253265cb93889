#pragma once

#include <stdexcept>
#include <string>

namespace salt {

// Error taxonomy used across the library. Each type maps to one failure
// class so tests can assert on the category rather than message text.

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error("dimension error: " + msg) {}
};

struct ConfigurationError : std::runtime_error {
    explicit ConfigurationError(const std::string& msg) : std::runtime_error("configuration error: " + msg) {}
};

struct DegenerateBatchError : std::runtime_error {
    explicit DegenerateBatchError(const std::string& msg) : std::runtime_error("degenerate batch: " + msg) {}
};

struct LabelError : std::runtime_error {
    explicit LabelError(const std::string& msg) : std::runtime_error("label error: " + msg) {}
};

struct TapeError : std::runtime_error {
    explicit TapeError(const std::string& msg) : std::runtime_error("tape error: " + msg) {}
};

struct ProtocolMisuseError : std::runtime_error {
    explicit ProtocolMisuseError(const std::string& msg) : std::runtime_error("protocol misuse: " + msg) {}
};

struct TransportError : std::runtime_error {
    explicit TransportError(const std::string& msg) : std::runtime_error("transport error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error("divergence: " + msg) {}
};

} // namespace salt
