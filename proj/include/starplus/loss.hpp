// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "starplus/matrix.hpp"

namespace starplus {

double sigmoid(double z) noexcept;

struct BceResult {
  double loss = 0.0;
  /// d loss / d logits, already scaled by 1/n.
  Matrix grad;
};

/// Mean binary cross-entropy on logits, evaluated as
/// max(z,0) - z*y + log(1 + exp(-|z|)) so saturated logits never overflow.
/// Labels must be exactly 0 or 1.
BceResult bce_loss(const Matrix& logits, const Matrix& labels);

}  // namespace starplus
