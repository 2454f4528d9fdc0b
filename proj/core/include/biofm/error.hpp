#pragma once

#include <stdexcept>
#include <string>

namespace biofm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad shapes, counts or config values. The CLI maps this to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// NaN/Inf reached a loss or parameter. The CLI maps this to exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Missing files, checksum or version mismatch.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace biofm
