#pragma once

#include <stdexcept>
#include <string>

namespace icethick {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// An invalid architecture, scene or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by an op or seen by the optimizer.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Unreadable, unwritable or malformed files.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace icethick
