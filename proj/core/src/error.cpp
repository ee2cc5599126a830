#include "gridmc/error.hpp"

namespace gridmc {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::missing_file: return "missing file";
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::singular_admittance: return "singular admittance";
    case ErrorCode::unassigned_phase: return "unassigned phase";
    case ErrorCode::unknown_phase: return "unknown phase";
    case ErrorCode::diverged_flow: return "diverged flow";
    case ErrorCode::degenerate_linearization: return "degenerate linearization";
    case ErrorCode::undefined_metric: return "undefined metric";
    case ErrorCode::unsupported_config: return "unsupported config";
    case ErrorCode::protocol_violation: return "protocol violation";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::non_convergence: return "non-convergence";
    case ErrorCode::parse_error: return "parse error";
  }
  return "unknown error";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace gridmc
