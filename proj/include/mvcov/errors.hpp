#pragma once

#include <stdexcept>
#include <string>

namespace mvcov {

// Exit-code mapping used by the CLI: config=2, data=3, numeric=4.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Cholesky failure; pivot is the index of the first non-positive pivot.
struct DecompositionError : NumericError {
    int pivot;
    explicit DecompositionError(int pivot_index, const std::string& what)
        : NumericError(what), pivot(pivot_index) {}
};

struct TrainingError : NumericError {
    using NumericError::NumericError;
};

}  // namespace mvcov
