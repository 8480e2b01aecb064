#pragma once

#include <stdexcept>
#include <string>

namespace camalign {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or inconsistent option combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Shape or size mismatch between tensors, labels or parameter blocks.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace camalign
