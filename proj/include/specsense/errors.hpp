#pragma once

#include <stdexcept>
#include <string>

namespace specsense {

// Bad arguments, malformed files, unsatisfiable queries. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failures that occur while doing valid work (I/O, divergence). Exit code 3.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace specsense
