#pragma once

#include <stdexcept>
#include <string>

namespace ncap {

// Invalid-argument failures use std::invalid_argument directly.

/// Raised when a computation produces or would consume non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An estimator cannot produce a meaningful value for the given samples
/// (e.g. a reference distribution that does not cover the data).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lookup into a constant table failed.
class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// More than half of the rounds of a capacity estimate aborted.
class EstimationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ncap
