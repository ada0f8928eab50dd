#pragma once

#include <stdexcept>
#include <string>

namespace turbsim {

/// Invalid argument to an operation (negative variance, bad Noll index, ...).
class ParameterError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent configuration, e.g. a PSF basis built for other optics.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure (non-convergent quadrature, failed factorization).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// File could not be read or written.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or referentially inconsistent input data (COCO files, detections).
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace turbsim
