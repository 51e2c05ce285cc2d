#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace drag {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, out-of-range parameters, inconsistent flags.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A value went NaN/Inf, or training diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace drag
