#pragma once

#include <stdexcept>
#include <string>

namespace sfe {

/// Raised when caller-supplied data violates a documented precondition.
/// The CLI maps this to exit code 1.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when a well-formed request fails while running (divergence, I/O,
/// missing artifacts discovered mid-run). The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

class TrainingDiverged : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace sfe
