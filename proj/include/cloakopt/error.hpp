#pragma once

#include <stdexcept>
#include <string>

namespace cloak {

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a sparse factorization fails (singular pivot, resonance).
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace cloak
