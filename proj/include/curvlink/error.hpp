#pragma once

#include <stdexcept>
#include <string>

namespace curvlink {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value outside the manifold domain or a non-finite argument.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A numerical singularity (vanishing denominator, non-finite intermediate).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad user input: missing files, malformed lines, invalid ids, bad configs.
class InputError : public Error {
 public:
  using Error::Error;
};

// A binary container that does not match the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace curvlink
