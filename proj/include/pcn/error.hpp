#pragma once

#include <stdexcept>
#include <string>

namespace pcn {

/// Bad input: malformed config, trace, series or argument. Maps to CLI exit 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input that is well-formed but unusable for the requested computation,
/// e.g. a zero-variance series handed to the ACF.
class DegenerateInputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace pcn
