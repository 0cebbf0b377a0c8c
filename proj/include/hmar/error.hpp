#pragma once

#include <stdexcept>
#include <string>

namespace hmar {

// Precondition violated by the caller.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation invoked on an object in the wrong state (masked tokens at decode,
// missing saved attention state, refinement without a trained masked head).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf produced by a computation. `layer` is -1 when not attributable.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& what, int layer = -1)
      : std::runtime_error(what), layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

// Malformed or mismatched artifact on disk.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hmar
