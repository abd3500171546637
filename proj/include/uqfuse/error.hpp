#pragma once

#include <stdexcept>
#include <string>

namespace uqfuse {

enum class ErrorKind {
  InvalidArgument,  // precondition or contract violation by the caller
  Io,               // file missing, unreadable, unwritable
  Parse,            // malformed input file
  Compute,          // numerical failure (factorization, degenerate statistics)
};

/// Single exception type for the library. `path` is set when the failure is
/// tied to a file, `line` when a parser can point at one (1-based, 0 = none).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::string path = {}, long line = 0);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& path() const noexcept { return path_; }
  long line() const noexcept { return line_; }

 private:
  ErrorKind kind_;
  std::string path_;
  long line_;
};

[[noreturn]] void throw_invalid(const std::string& what);
[[noreturn]] void throw_compute(const std::string& what);

inline void require(bool cond, const char* what) {
  if (!cond) throw_invalid(what);
}

}  // namespace uqfuse
