#pragma once

#include <stdexcept>
#include <string>

namespace msdn {

// Every error raised by the library derives from Error so callers can map
// the concrete type onto an exit code or test expectation.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible matrix or tensor shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-range or otherwise invalid argument values.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Non-finite values met during evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Base for everything the container reader/writer can raise.
class DataError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class VersionError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

// Loaded content parsed fine but violates a dataset invariant.
class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace msdn
