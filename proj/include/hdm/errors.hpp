#pragma once

#include <stdexcept>
#include <string>

namespace hdm {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerically or structurally unusable input (too few points, zero weights,
// rank-deficient covariance, k larger than the candidate set, ...).
struct DegenerateInput : Error {
    using Error::Error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct EmptyCloud : Error {
    using Error::Error;
};

struct EmptyDataset : Error {
    using Error::Error;
};

// File could not be parsed; message names the offending byte or line.
struct MalformedFile : Error {
    using Error::Error;
};

}  // namespace hdm
