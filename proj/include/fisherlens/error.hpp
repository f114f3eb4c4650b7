#pragma once

#include <stdexcept>
#include <string>

namespace fisherlens {

/// Failure categories. The C API maps each one to a stable status code.
enum class ErrorKind {
  Dimension,   // shape / length mismatch
  Contract,    // precondition violated by the caller
  Degenerate,  // input has no meaningful answer (single class, empty batch)
  Format,      // malformed file or schema
  Numeric,     // ill-conditioned or non-finite computation
  State,       // stale or missing recorded state
  Config,      // configuration parse or validation failure
  Io,          // filesystem failure
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace fisherlens
