#pragma once

#include <stdexcept>
#include <string>

namespace sopt {

// Base of every error the engine raises. The CLI maps the subclasses onto
// its exit-code contract (2 config, 3 numerical, 4 missing input).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by an operation, or a diverged optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input file or directory that does not exist.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace sopt
