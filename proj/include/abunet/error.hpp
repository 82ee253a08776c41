#pragma once

#include <stdexcept>
#include <string>

namespace abunet {

/// Base class for every error raised by the library. The C API maps each
/// subclass onto one status code.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes handed to a primitive.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration: unknown names, inconsistent options.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// NaN/Inf in a forward pass, loss or gradient.
class NumericError : public Error {
public:
  using Error::Error;
};

/// A blending-weight normalization whose denominator fell below the
/// degeneracy threshold.
class DegenerateNormalization : public NumericError {
public:
  using NumericError::NumericError;
};

/// File system and file format failures.
class IoError : public Error {
public:
  using Error::Error;
};

/// Misuse of the autodiff tape (backward before forward, non-scalar loss).
class TapeError : public Error {
public:
  using Error::Error;
};

} // namespace abunet
