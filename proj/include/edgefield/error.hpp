#pragma once

#include <stdexcept>

namespace edgefield {

/// Raised for malformed inputs and out-of-range parameters. The CLI maps it
/// to exit status 2; every other exception is a runtime failure.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace edgefield
