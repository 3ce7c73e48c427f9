#pragma once

#include <stdexcept>
#include <string>

namespace dropmix {

// Base for all engine errors. `module` names the component that raised the
// error so the CLI can report structured messages and exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error("[" + module + "] " + message),
        module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

// Bad configuration value (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

// Parse failure in a text input file; carries the offending line.
class ParseError : public DataError {
 public:
  ParseError(std::string module, const std::string& message, long line)
      : DataError(std::move(module),
                  message + " (line " + std::to_string(line) + ")"),
        line_(line) {}

  long line() const noexcept { return line_; }

 private:
  long line_;
};

// API misuse between modules (dimension mismatch and the like).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// An embedding row collapsed to (near-)zero norm; training must abort.
class DegenerateEmbeddingError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradients (CLI exit code 4).
class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

}  // namespace dropmix
