// SPDX-License-Identifier: Apache-2.0
//
// Error types shared by every module. Each error carries a stable code so the
// CLI can map it onto an exit status and a machine-parsable tag.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace starplus {

enum class ErrorCode {
  dimension,
  state,
  index,
  validation,
  degenerate_batch,
  config,
  schema,
  calibration,
  evaluation,
  io,
  numeric,
};

/// Short uppercase tag, e.g. "E_CONFIG".
std::string_view error_tag(ErrorCode code) noexcept;

/// 1 for input/config problems, 2 for runtime failures, 3 for numeric blowups.
int exit_code_for(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace starplus
