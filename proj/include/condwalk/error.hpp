#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace condwalk {

enum class ErrorKind {
  kNotAdjacent,
  kOverflow,
  kDisconnected,
  kSingular,
  kConvergenceFailure,
  kTruncatedTrap,
  kInsufficientData,
  kDegenerate,
  kNonPositiveLevel,
  kInvalidArgument,
  kConfig,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::kNotAdjacent: return "NotAdjacent";
    case ErrorKind::kOverflow: return "Overflow";
    case ErrorKind::kDisconnected: return "Disconnected";
    case ErrorKind::kSingular: return "Singular";
    case ErrorKind::kConvergenceFailure: return "ConvergenceFailure";
    case ErrorKind::kTruncatedTrap: return "TruncatedTrap";
    case ErrorKind::kInsufficientData: return "InsufficientData";
    case ErrorKind::kDegenerate: return "Degenerate";
    case ErrorKind::kNonPositiveLevel: return "NonPositiveLevel";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kConfig: return "Config";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace condwalk
