#pragma once

#include <stdexcept>
#include <string>

namespace twrmcae {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or parameter extents that do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written; the message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration value.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Numerical routine failed (e.g. SVD non-convergence).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace twrmcae
