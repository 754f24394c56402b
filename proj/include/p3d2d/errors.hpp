#pragma once

#include <stdexcept>
#include <string>

namespace p3d2d {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes are incompatible (matmul inner extents, conv channels, ...).
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Out-of-range index (class target, overlay slice, ...).
struct IndexError : Error {
    explicit IndexError(const std::string& msg) : Error(msg) {}
};

// Caller broke an API contract (non-scalar loss, center out of bounds, ...).
struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

// Malformed file: checkpoint, volume container, config.
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

}  // namespace p3d2d
