#pragma once

#include <stdexcept>
#include <string>

namespace archrank {

// Base for every failure the library reports.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a precondition: shape mismatch, empty input, bad config.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Produced NaN or Inf where finite values are required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace archrank
