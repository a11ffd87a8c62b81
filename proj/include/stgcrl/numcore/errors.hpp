#pragma once

#include <stdexcept>
#include <string>

namespace stgcrl {

// Caller broke a precondition (shape mismatch, out-of-range argument, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A NaN/Inf showed up in a forward or backward pass. what() names the op.
class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input is well-formed but mathematically degenerate (e.g. zero-norm vector
// handed to a cosine similarity).
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Corrupt or inconsistent on-disk data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace stgcrl
