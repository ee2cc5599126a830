#pragma once

#include <stdexcept>
#include <string>

namespace gridmc {

enum class ErrorCode {
  invalid_argument,
  missing_file,
  dimension_mismatch,
  singular_admittance,
  unassigned_phase,
  unknown_phase,
  diverged_flow,
  degenerate_linearization,
  undefined_metric,
  unsupported_config,
  protocol_violation,
  divergence,
  non_convergence,
  parse_error,
};

const char* to_string(ErrorCode code) noexcept;

// All library failures are reported through this type; code() is stable,
// what() carries a human-readable diagnostic prefixed by the code name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gridmc
