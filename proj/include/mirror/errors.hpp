#pragma once

#include <stdexcept>
#include <string>

namespace mirror {

/// Base class for every error raised by the library. `code()` is a stable
/// machine-readable identifier (used on the wire and in CLI diagnostics).
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class NonFiniteState : public Error {
public:
    explicit NonFiniteState(const std::string& what) : Error("non_finite_state", what) {}
};

class GridMismatch : public Error {
public:
    explicit GridMismatch(const std::string& what) : Error("grid_mismatch", what) {}
};

class LengthMismatch : public Error {
public:
    explicit LengthMismatch(const std::string& what) : Error("length_mismatch", what) {}
};

class NonMonotonicTime : public Error {
public:
    explicit NonMonotonicTime(const std::string& what) : Error("non_monotonic_time", what) {}
};

class DegenerateSamples : public Error {
public:
    explicit DegenerateSamples(const std::string& what) : Error("degenerate_samples", what) {}
};

class EmptyGrid : public Error {
public:
    explicit EmptyGrid(const std::string& what) : Error("empty_grid", what) {}
};

class TooShort : public Error {
public:
    explicit TooShort(const std::string& what) : Error("too_short", what) {}
};

/// Malformed input file or message. `field()` is the dotted path of the
/// offending field, e.g. `players[1].weights.theta_p`.
class SchemaViolation : public Error {
public:
    SchemaViolation(std::string field, const std::string& what)
        : Error("schema_violation", field.empty() ? what : field + ": " + what),
          field_(std::move(field)),
          message_(what) {}

    const std::string& field() const noexcept { return field_; }
    /// The description without the field prefix.
    const std::string& message() const noexcept { return message_; }

private:
    std::string field_;
    std::string message_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

}  // namespace mirror
