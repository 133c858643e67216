#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hovernet {

enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  missing_label,
  unknown_type,
  missing_tile,
  duplicate_tile,
  placement_failure,
  undefined_value,
  io,
  parse,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::missing_label: return "missing_label";
    case ErrorKind::unknown_type: return "unknown_type";
    case ErrorKind::missing_tile: return "missing_tile";
    case ErrorKind::duplicate_tile: return "duplicate_tile";
    case ErrorKind::placement_failure: return "placement_failure";
    case ErrorKind::undefined_value: return "undefined_value";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace hovernet
