#pragma once

#include <stdexcept>
#include <string>

namespace amc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid user input: config keys, option ranges, unknown names.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Argument shape/length mismatch or a violated precondition.
class ShapeError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or activation during training or inference.
class DivergenceError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    SolverError(const std::string& what, double duality_gap)
        : Error(what), duality_gap_(duality_gap) {}
    double duality_gap() const noexcept { return duality_gap_; }

private:
    double duality_gap_;
};

enum class FormatErrorKind { BadMagic, Truncated, VersionMismatch, Invalid, Io };

class FormatError : public Error {
public:
    FormatError(FormatErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    FormatErrorKind kind() const noexcept { return kind_; }

private:
    FormatErrorKind kind_;
};

}  // namespace amc
