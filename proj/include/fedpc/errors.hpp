#pragma once

#include <stdexcept>
#include <string>

namespace fedpc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration or violated precondition.
struct ConfigError : Error {
  using Error::Error;
};

// Dimension or length mismatch between tensors/vectors.
struct ShapeError : Error {
  using Error::Error;
};

// Malformed input file; message carries the offending line number.
struct ParseError : Error {
  using Error::Error;
};

// Non-finite value where a finite one is required.
struct NumericError : Error {
  using Error::Error;
};

// Evaluation requested on an empty or unusable set.
struct EvalError : Error {
  using Error::Error;
};

// Model aggregation failed (length mismatch, degenerate weights).
struct AggregationError : Error {
  using Error::Error;
};

// Incompatible report schema in `compare`.
struct SchemaError : Error {
  using Error::Error;
};

}  // namespace fedpc
