#pragma once

#include <stdexcept>
#include <string>

namespace lgcn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A numeric precondition failed (zero-norm row, vanishing degree, tiny divisor).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an API contract (non-scalar backward root, empty label set, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files or configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace lgcn
