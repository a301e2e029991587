#pragma once

#include <stdexcept>
#include <string>

namespace cinetrans {

// Process exit codes shared by the CLI. Every library error maps onto one.
enum class ExitCode : int {
  ok = 0,
  validation = 2,
  io = 3,
  not_computable = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::validation; }
};

// Inputs that violate a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IndexError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A softmax row where every entry is disallowed.
class DegenerateRowError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UndefinedCorrelationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::io; }
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class SizeMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

// A metric that is undefined for the given input (e.g. inter-shot scores of a
// single-shot video).
class NotComputableError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::not_computable; }
};

}  // namespace cinetrans
