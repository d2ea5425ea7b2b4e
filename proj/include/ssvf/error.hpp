#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ssvf {

/// Coarse failure category, mapped onto CLI exit codes.
enum class ErrorCategory { config = 2, transport = 3, integrity = 4, io = 5 };

inline const char* to_string(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::config: return "config";
        case ErrorCategory::transport: return "transport";
        case ErrorCategory::integrity: return "integrity";
        case ErrorCategory::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

/// Bad parameters: policy, codec, scenario or run configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

/// Malformed arguments to a library operation.
class InvalidInput : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class DivisionByZero : public InvalidInput {
public:
    DivisionByZero() : InvalidInput("inverse of zero in prime field") {}
};

/// A real value outside the codec's declared magnitude bound.
class RangeError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// Fewer shares than the reconstruction threshold.
class ThresholdError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// Shares or broadcast points that are not on a single polynomial.
class IntegrityError : public Error {
public:
    IntegrityError(std::uint32_t round, const std::string& what)
        : Error(ErrorCategory::integrity, what), round_(round) {}

    std::uint32_t round() const noexcept { return round_; }

private:
    std::uint32_t round_;
};

class TransportError : public Error {
public:
    explicit TransportError(const std::string& what) : Error(ErrorCategory::transport, what) {}
};

class RoutingError : public TransportError {
public:
    using TransportError::TransportError;
};

/// A round could not complete: barrier timeout, missing messages, or an abort
/// raised by another agent.
class RoundAbort : public TransportError {
public:
    using TransportError::TransportError;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

/// Input file content that cannot be parsed; carries the 1-based row number.
class ParseError : public IoError {
public:
    ParseError(std::size_t row, const std::string& what)
        : IoError("row " + std::to_string(row) + ": " + what), row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

}  // namespace ssvf
