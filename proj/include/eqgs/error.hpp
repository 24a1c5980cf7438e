#pragma once

#include <stdexcept>
#include <string>

namespace eqgs {

// Base for all library errors. CLI maps subclasses to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, invalid configs, shape mismatches.
struct UsageError : Error {
  using Error::Error;
};

// A pair that cannot be registered (too few valid similarity rows).
struct UnregistrableError : Error {
  using Error::Error;
};

// NaN/Inf encountered, or a numeric contract violated.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace eqgs
