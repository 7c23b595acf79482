#pragma once

#include <stdexcept>
#include <string>

namespace primkit {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer dimension mismatches; messages carry both offending shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration values (rates, depths, split counts, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input files; messages carry row/column locations.
struct ParseError : Error {
    using Error::Error;
};

// NaN/Inf encountered where the pipeline requires finite values.
struct NumericError : Error {
    using Error::Error;
};

// Contract violations between components (feature hashes, modes, shapes
// agreed at checkpoint time).
struct ContractError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace primkit
