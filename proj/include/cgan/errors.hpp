#pragma once

#include <stdexcept>
#include <string>

namespace cgan {

// Base of every error the library throws. The CLI maps the subclasses onto
// its exit codes (config -> 1, data/format -> 2, numeric -> 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameter or architecture description.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (bad magic, truncation, unparsable header).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Missing or unreadable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cgan
