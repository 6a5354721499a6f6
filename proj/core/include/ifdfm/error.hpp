#pragma once

#include <stdexcept>
#include <string>

namespace ifdfm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, bad arguments or a violated precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `line()` is 1-based, 0 when the error is not tied to
// a particular line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Non-finite values, indefinite operators, divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied input contradicts a documented invariant (for example a
// label-reversal index that was already positive).
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace ifdfm
