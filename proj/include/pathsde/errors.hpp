#pragma once

#include <stdexcept>
#include <string>

namespace pathsde {

// Every failure raised by the library derives from Error so callers can
// catch numerical failures in one place.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad sizes, ranges, indices).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// A finite-difference stencil or evaluation left the declared domain.
class DomainError : public Error {
public:
    using Error::Error;
};

// A derivative of an order the callable does not supply was requested.
class CapabilityError : public Error {
public:
    using Error::Error;
};

// An iteration ran out of budget.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

// A Neumann series stopped shrinking: the declared modulus is wrong.
class ContractionError : public Error {
public:
    using Error::Error;
};

// Picard increments grew: the declared coefficient bounds do not hold.
class ModelBoundError : public Error {
public:
    using Error::Error;
};

// Invalid configuration; carries the offending field path (e.g. "solver.p").
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace pathsde
