#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace saan {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree with what an operation expects.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& op, const std::string& axis, const std::string& detail)
      : Error(op + ": dimension mismatch on " + axis + " (" + detail + ")"), axis_(axis) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

// Malformed bytes in a file or stream; carries the byte offset of the failure.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Well-formed input that violates a precondition (missing file, bad config, degenerate bins).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A checkpoint whose parameter inventory does not match the model definition.
class InventoryError : public ValidationError {
 public:
  InventoryError(const std::string& param, const std::string& detail)
      : ValidationError("parameter '" + param + "': " + detail), param_(param) {}

  const std::string& param() const noexcept { return param_; }

 private:
  std::string param_;
};

// NaN/Inf encountered during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace saan
