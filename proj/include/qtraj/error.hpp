#pragma once

#include <stdexcept>
#include <string>

namespace qtraj {

/// Failure categories. The CLI maps each category to a distinct exit code.
enum class ErrorKind {
  validation,   // bad argument or configuration
  out_of_range, // value outside a tabulated domain
  degenerate,   // zero likelihood, collapsed trace, singular pointer point
  numeric,      // integrator blow-up or tolerance violation
  capacity,     // request exceeds a hard size limit
  parse         // malformed input file
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::validation, what);
}

const char* to_string(ErrorKind kind) noexcept;

}  // namespace qtraj
