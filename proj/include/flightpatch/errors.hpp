#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flightpatch {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is out of its legal range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The API was called in a state where the request makes no sense.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A forward computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Not enough points/samples to perform the request.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Input file does not carry a required column or field.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A binary/text artifact is malformed, tampered with, or of the wrong version.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Reconstruction hit the arcsin domain boundary at a given horizon step.
class OutOfRangeError : public Error {
 public:
  OutOfRangeError(const std::string& what, std::size_t step) : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace flightpatch
