#pragma once

#include <stdexcept>
#include <string>

namespace probe {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension mismatch between consecutive layers or between a layer and its
// input; the message names the offending layer.
struct ShapeError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

// Invalid arguments (empty input set, n < k, non-ascending widths, ...).
struct ArgumentError : Error {
    using Error::Error;
};

// Requested embedding rank exceeds the network's minimum hidden width.
struct CapacityError : Error {
    using Error::Error;
};

// Metric undefined for the given inputs (zero norm, zero variance, zero rank).
struct UndefinedMetricError : Error {
    using Error::Error;
};

// Malformed file contents (dataset fixtures, checkpoints).
struct FormatError : Error {
    using Error::Error;
};

// Invalid experiment configuration; message lists every violated field.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace probe
