#pragma once

#include <stdexcept>
#include <string>

namespace pfm {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad inputs or configuration; the CLI reports these with exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParamError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// NaN or infinity reaching a layer.
class NonFiniteError : public DataError {
 public:
  using DataError::DataError;
};

class TransferError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class FingerprintError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Failures while doing work; the CLI reports these with exit code 2.
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace pfm
