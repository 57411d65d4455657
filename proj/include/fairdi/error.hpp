#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fairdi {

enum class ErrorCode {
  invalid_parameter,
  invalid_input,
  shape_error,
  numeric_error,
  empty_batch,
  empty_distribution,
  undefined_metric,
  configuration,
  cohort_empty,
  parse_error,
  unsupported_k,
  invalid_spec,
  io_error,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library is an Error carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fairdi
