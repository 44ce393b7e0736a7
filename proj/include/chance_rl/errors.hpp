#pragma once

#include <stdexcept>
#include <string>

namespace chance_rl {

/// Base class for all library failures that a caller may want to map to an
/// exit status.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or incomplete experiment configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// A numerical computation produced a non-finite value.
class NumericError : public Error {
public:
  using Error::Error;
};

}  // namespace chance_rl
