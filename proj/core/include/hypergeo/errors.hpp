#pragma once

#include <stdexcept>
#include <string>

namespace hypergeo {

/// Malformed configuration or data: shape mismatches, out-of-range flags,
/// unreadable or mis-versioned files. The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Arithmetic went non-finite or diverged. Carries the name of the primitive
/// or phase that produced the fault. The CLI maps this to exit code 3.
class NumericalFault : public std::runtime_error {
 public:
  NumericalFault(std::string where, const std::string& detail)
      : std::runtime_error(where + ": " + detail), where_(std::move(where)) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace hypergeo
