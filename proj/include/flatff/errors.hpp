#pragma once

#include <stdexcept>

namespace flatff {

/// Box, cutoff, or domain geometry that the requested operation cannot support.
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite or otherwise unusable number appeared in a computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Power-law regression could not be performed on the supplied records.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unknown configuration; the message names the key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flatff
