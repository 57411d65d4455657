#include "fairdi/error.hpp"

namespace fairdi {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_parameter: return "invalid-parameter";
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::shape_error: return "shape-error";
    case ErrorCode::numeric_error: return "numeric-error";
    case ErrorCode::empty_batch: return "empty-batch";
    case ErrorCode::empty_distribution: return "empty-distribution";
    case ErrorCode::undefined_metric: return "undefined-metric";
    case ErrorCode::configuration: return "configuration";
    case ErrorCode::cohort_empty: return "cohort-empty";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::unsupported_k: return "unsupported-k";
    case ErrorCode::invalid_spec: return "invalid-spec";
    case ErrorCode::io_error: return "io-error";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace fairdi
