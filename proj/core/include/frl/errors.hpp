#pragma once

#include <stdexcept>
#include <string>

namespace frl {

/// Shape/range violations in numerical kernels.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Bad or inconsistent run configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem / stream failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Structured problems in on-disk artifacts. Kinds are distinct so callers
/// can tell a wrong file apart from a damaged one.
struct FormatError : IoError {
    enum class Kind { magic_mismatch, version_mismatch, truncated, invariant_violation };

    FormatError(Kind k, const std::string& msg) : IoError(msg), kind(k) {}

    Kind kind;
};

/// Training produced a non-finite quantity. batch_index points at the first
/// offending sample when known, -1 otherwise.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg, long batch_index_ = -1)
        : std::runtime_error(msg), batch_index(batch_index_) {}

    long batch_index;
};

}  // namespace frl
