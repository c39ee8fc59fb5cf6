#pragma once

#include <stdexcept>
#include <string>

namespace delnet {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or malformed arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported files (tensor blobs, checkpoints, configs).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace delnet
