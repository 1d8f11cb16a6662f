#pragma once

#include <stdexcept>
#include <string>

namespace nls2 {

/// Failure categories. The CLI maps them onto process exit codes.
enum class ErrorKind {
  validation,     // bad input, violated precondition, malformed config
  certification,  // ground state failed its identity / oracle checks
  run,            // numerical failure during a computation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::validation, what);
}

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return 2;
    case ErrorKind::certification: return 3;
    case ErrorKind::run: return 4;
  }
  return 4;
}

}  // namespace nls2
