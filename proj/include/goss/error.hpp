#pragma once

#include <stdexcept>
#include <string>

namespace goss {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  kSuccess = 0,
  kUsage = 2,
  kData = 3,
  kNumerical = 4,
};

/// Base of every error raised by the library. Carries the name of the module
/// that raised it so the CLI can report "module: cause".
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }
  virtual ExitCode exit_code() const noexcept = 0;

 private:
  std::string module_;
};

/// Problems with the input data or with requested sizes.
class DataError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(std::string module, const std::string& message, std::size_t line)
      : DataError(std::move(module), message + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  /// 1-based line number in the source file, header included.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyInputError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

/// Requested subdata size cannot be met (n > N, m > C_i, ...).
class InfeasibleError : public DataError {
 public:
  using DataError::DataError;
};

/// Linear-algebra and estimation failures.
class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumerical; }
};

class SingularMatrixError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InsufficientReplicationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace goss
