#pragma once

#include <stdexcept>
#include <string>

namespace sentinel {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// An estimation routine received fewer samples than it needs.
class InsufficientDataError : public Error {
public:
    explicit InsufficientDataError(const std::string& what) : Error(what) {}
};

/// A covariance matrix could not be factorized as symmetric positive-definite.
class NotSpdError : public Error {
public:
    explicit NotSpdError(const std::string& what) : Error(what) {}
};

/// Vector or matrix dimensions do not agree.
class DimensionMismatchError : public Error {
public:
    explicit DimensionMismatchError(const std::string& what) : Error(what) {}
};

/// Malformed input data. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, long line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

/// A serialized model is unreadable or has an incompatible schema.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& what) : Error(what) {}
};

}  // namespace sentinel
