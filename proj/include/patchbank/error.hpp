#pragma once

#include <stdexcept>
#include <string>

namespace patchbank {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidState : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed binary container (bad magic, truncated payload, bad header).
class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersion : public FormatError {
 public:
  using FormatError::FormatError;
};

// Raised when a metric is not defined for its input, e.g. single-class labels.
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IndexingError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class FingerprintMismatch : public Error {
 public:
  using Error::Error;
};

class IncompleteGrid : public Error {
 public:
  using Error::Error;
};

}  // namespace patchbank
