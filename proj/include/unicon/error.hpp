#pragma once

#include <stdexcept>
#include <string>

namespace unicon {

// Bad input: malformed files, invalid configs, violated preconditions.
// Surfaces as exit code 2 at the command line.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failures that happen while doing valid work (I/O, numerical divergence).
// Surfaces as exit code 3.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace unicon
