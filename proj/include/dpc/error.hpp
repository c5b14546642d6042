#pragma once

#include <stdexcept>
#include <string>

namespace dpc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input vector too close to zero to define a direction.
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Control vector, Jacobian or task sizes disagree.
class DimensionMismatchError : public Error {
public:
    using Error::Error;
};

/// A matrix that must be inverted is singular at the requested tolerance.
class SingularMatrixError : public Error {
public:
    using Error::Error;
};

/// The extended Jacobian needs a task Jacobian with full row rank.
class RankDeficientError : public Error {
public:
    using Error::Error;
};

/// A value violates a type invariant (negative gain, empty range, ...).
class InvalidArgumentError : public Error {
public:
    using Error::Error;
};

}  // namespace dpc
