#pragma once

#include <stdexcept>
#include <string>

namespace dquad {

/// Caller broke a documented precondition (bad axis, malformed rectangle, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A rule was requested for a dimension it does not support.
class UnsupportedDimension : public std::invalid_argument {
 public:
  UnsupportedDimension(const std::string& rule, int dim, const std::string& why)
      : std::invalid_argument(rule + ": unsupported dimension " + std::to_string(dim) + " (" + why +
                              ")"),
        dim_(dim) {}

  [[nodiscard]] int dim() const noexcept { return dim_; }

 private:
  int dim_;
};

/// Workers disagree about the iteration, a rank record is missing, or a
/// transfer was never acknowledged. Always fatal.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data (rule tables, wire frames).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dquad
