#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scsm {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument or data violates a documented precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Input files cannot be parsed or fail schema validation.
class DataError : public Error {
 public:
  using Error::Error;
};

// The instrument cannot identify the effect (e.g. one arm is empty).
class IdentificationError : public Error {
 public:
  using Error::Error;
};

// A computation produced a non-finite value.
class NumericFailure : public Error {
 public:
  NumericFailure(const std::string& what, std::size_t jump_index)
      : Error(what + " (jump index " + std::to_string(jump_index) + ")"),
        jump_index_(jump_index) {}

  std::size_t jump_index() const noexcept { return jump_index_; }

 private:
  std::size_t jump_index_;
};

}  // namespace scsm
