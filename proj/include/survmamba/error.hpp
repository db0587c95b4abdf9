#pragma once

#include <stdexcept>
#include <string>

namespace survmamba {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid configuration value or unrecognized option.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed or inconsistent input data (files, bags, outcomes).
struct DataError : Error {
    using Error::Error;
};

// Non-finite function value during evaluation or training.
struct EvaluationError : Error {
    using Error::Error;
};

// A statistic is undefined for the given input (e.g. no comparable pairs).
struct UndefinedResultError : Error {
    using Error::Error;
};

}  // namespace survmamba
