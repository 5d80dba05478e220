#pragma once
// Exception hierarchy. The CLI maps the three families onto exit codes:
// ConfigError -> 2, DataError -> 3, NumericError -> 4.

#include <stdexcept>
#include <string>

namespace gresynth {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration, invalid parameters or mismatched architecture.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values (beta range, batch parity, TE ordering, ...).
class ParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Malformed, missing or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values or failed numerical procedures.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace gresynth
