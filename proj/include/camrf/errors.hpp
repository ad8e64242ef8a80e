#pragma once

#include <stdexcept>
#include <string>

namespace camrf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset, model or plan documents.
class DataError : public Error {
 public:
  using Error::Error;
};

// The threshold-to-conductance mapping cannot be built for the given
// cell, sense and device parameters.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

// An internal invariant did not hold (corrupt model, lost row, ...).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace camrf
