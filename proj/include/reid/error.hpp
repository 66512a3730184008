#pragma once

#include <stdexcept>
#include <string>

namespace reid {

/// Base of every error the library raises. `kind()` is a stable,
/// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("ShapeError", message) {}
};

/// A binary16 tensor reached an operation that must run in binary32.
class PrecisionViolation : public Error {
 public:
  explicit PrecisionViolation(const std::string& message) : Error("PrecisionViolation", message) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message) : Error("InvalidArgument", message) {}
};

/// Malformed or truncated file content.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error("FormatError", message) {}
};

/// Model or optimizer state is unusable (non-finite masters, mismatched buffers).
class StateError : public Error {
 public:
  explicit StateError(const std::string& message) : Error("StateError", message) {}
};

}  // namespace reid
