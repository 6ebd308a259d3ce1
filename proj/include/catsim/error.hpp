#pragma once

#include <stdexcept>
#include <string>

namespace catsim {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: configuration syntax, unknown keys, out-of-range values.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// A numerical routine could not produce a valid result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Fock cutoff too small for the requested state.
class TruncationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed homodyne record file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace catsim
