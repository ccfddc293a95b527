#pragma once

#include <stdexcept>
#include <string>

namespace dft {

enum class ErrorKind {
  Shape,     // operand dimensions disagree
  Index,     // id or layer out of range
  Value,     // degenerate or empty input (zero norm, empty mask, ...)
  Length,    // sequence exceeds a configured budget
  Parse,     // malformed file content
  Io,        // filesystem failure
  Config,    // inconsistent configuration
  Contract,  // API precondition violated
};

const char* to_string(ErrorKind kind) noexcept;

/// All library errors carry a kind plus a one-line message; what() is
/// "<kind>: <message>" so the CLI can forward it verbatim.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Shape: return "shape-error";
    case ErrorKind::Index: return "index-error";
    case ErrorKind::Value: return "value-error";
    case ErrorKind::Length: return "length-error";
    case ErrorKind::Parse: return "parse-error";
    case ErrorKind::Io: return "io-error";
    case ErrorKind::Config: return "config-error";
    case ErrorKind::Contract: return "contract-error";
  }
  return "error";
}

}  // namespace dft
