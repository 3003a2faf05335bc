#pragma once

#include <stdexcept>
#include <string>

namespace fkfield {

enum class ErrorCode {
  invalid_spec,
  no_known_critical_point,
  too_many_bonds,
  unsupported_lattice,
  support_exceeds_lattice,
  supports_not_retained,
  empty_ensemble,
  invalid_argument,
  insufficient_range,
  radius_exceeds_lattice,
  degenerate_annulus,
  nonpositive_values,
  too_few_points,
  h_underflow,
  invalid_config,
  io_error,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_spec: return "invalid-spec";
    case ErrorCode::no_known_critical_point: return "no-known-critical-point";
    case ErrorCode::too_many_bonds: return "too-many-bonds";
    case ErrorCode::unsupported_lattice: return "unsupported-lattice";
    case ErrorCode::support_exceeds_lattice: return "support-exceeds-lattice";
    case ErrorCode::supports_not_retained: return "supports-not-retained";
    case ErrorCode::empty_ensemble: return "empty-ensemble";
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::insufficient_range: return "insufficient-range";
    case ErrorCode::radius_exceeds_lattice: return "radius-exceeds-lattice";
    case ErrorCode::degenerate_annulus: return "degenerate-annulus";
    case ErrorCode::nonpositive_values: return "nonpositive-values";
    case ErrorCode::too_few_points: return "too-few-points";
    case ErrorCode::h_underflow: return "h-underflow";
    case ErrorCode::invalid_config: return "invalid-config";
    case ErrorCode::io_error: return "io-error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fkfield
