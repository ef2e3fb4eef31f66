#pragma once

#include <stdexcept>
#include <string>

namespace ipg {

// Tensor shape contract violated (channel mismatch, odd pooling dims, ...).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Pyramid feature and backbone feature disagree spatially at a fusion point.
class AlignmentError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

// Invalid network / schedule / data configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller broke an API contract (e.g. backward on a non-scalar).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input does not satisfy an operation's precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training produced NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command-line request (unknown experiment, missing option).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace ipg
