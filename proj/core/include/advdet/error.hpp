#pragma once

#include <stdexcept>
#include <string>

namespace advdet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File missing, unreadable, undecodable or unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

// Image or tensor shape violates a contract (size, multiple-of-16, mismatch).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or malformed config file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Degenerate geometric or region input (collinear hull points, empty region).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Too few samples for an estimator.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or parameters during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Metric undefined on the given input (e.g. single-class AUC).
class MetricError : public Error {
 public:
  using Error::Error;
};

// Checkpoint or artifact version not supported.
class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace advdet
