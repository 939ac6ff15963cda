#pragma once

#include <stdexcept>
#include <string>

namespace octrecon {

// Bad argument values (lengths, factors, ranges). Maps to a data error at the CLI.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor / image shape contract violated.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated persisted artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Statistic undefined for the input (constant channel, empty dynamic range).
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN or infinity produced where only finite values are allowed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace octrecon
