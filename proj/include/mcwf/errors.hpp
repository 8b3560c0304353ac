#pragma once

#include <stdexcept>
#include <string>

namespace mcwf {

// Base class for all library failures. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad parameters, malformed config, violated caller contracts. Exit code 2.
class ValidationError : public Error {
public:
    using Error::Error;
};

class DimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ContractError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Runtime numerics went wrong: non-finite values, invariant breach. Exit code 3.
class NumericError : public Error {
public:
    using Error::Error;
};

// Timestep forced below dt_min by error control.
class StiffnessError : public NumericError {
public:
    using NumericError::NumericError;
};

class DegenerateStateError : public NumericError {
public:
    using NumericError::NumericError;
};

// Basis cutoff too small for the requested state or evolution. Exit code 4.
class TruncationError : public Error {
public:
    TruncationError(const std::string& what, double tail) : Error(what), tail_weight(tail) {}
    double tail_weight;
};

} // namespace mcwf
