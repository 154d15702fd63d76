#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dspace {

enum class ErrorCode {
  coding,            // unknown categorical level label
  specification,     // malformed term list / problem definition
  singular_fit,      // rank-deficient design matrix
  contract,          // dimension or precondition mismatch
  numeric,           // series / root finding did not converge
  degenerate_point,  // zero prediction variance with positive sigma2
  capacity,          // request exceeds a size guard
  infeasible,        // no design space containing the setpoint
  parse,             // malformed JSON / CSV input
  timeout,           // compute deadline exceeded
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dspace
