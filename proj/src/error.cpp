// SPDX-License-Identifier: Apache-2.0

#include "starplus/error.hpp"

namespace starplus {

std::string_view error_tag(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::dimension: return "E_DIMENSION";
    case ErrorCode::state: return "E_STATE";
    case ErrorCode::index: return "E_INDEX";
    case ErrorCode::validation: return "E_VALIDATION";
    case ErrorCode::degenerate_batch: return "E_DEGENERATE_BATCH";
    case ErrorCode::config: return "E_CONFIG";
    case ErrorCode::schema: return "E_SCHEMA";
    case ErrorCode::calibration: return "E_CALIBRATION";
    case ErrorCode::evaluation: return "E_EVALUATION";
    case ErrorCode::io: return "E_IO";
    case ErrorCode::numeric: return "E_NUMERIC";
  }
  return "E_UNKNOWN";
}

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::dimension:
    case ErrorCode::index:
    case ErrorCode::validation:
    case ErrorCode::degenerate_batch:
    case ErrorCode::config:
    case ErrorCode::schema:
    case ErrorCode::calibration:
      return 1;
    case ErrorCode::state:
    case ErrorCode::io:
      return 2;
    case ErrorCode::evaluation:
    case ErrorCode::numeric:
      return 3;
  }
  return 2;
}

}  // namespace starplus
