#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace herald {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition (non-scalar loss, empty mask, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Reduction over an empty axis and similar domain violations.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration, rejected before any compute happens.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data is structurally invalid.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Input file could not be parsed.
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A node has zero degree, so D_v is not invertible.
class DegenerateNodeError : public ValidationError {
 public:
  DegenerateNodeError(std::size_t node, const std::string& what)
      : ValidationError(what), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

// NaN or Inf reached a checked boundary.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace herald
