#include "dspace/error.hpp"

namespace dspace {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::coding: return "coding_error";
    case ErrorCode::specification: return "specification_error";
    case ErrorCode::singular_fit: return "singular_fit";
    case ErrorCode::contract: return "contract_error";
    case ErrorCode::numeric: return "numeric_error";
    case ErrorCode::degenerate_point: return "degenerate_point";
    case ErrorCode::capacity: return "capacity_error";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::parse: return "parse_error";
    case ErrorCode::timeout: return "timeout";
  }
  return "unknown";
}

}  // namespace dspace
