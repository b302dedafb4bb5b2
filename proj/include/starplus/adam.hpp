// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "starplus/param.hpp"

namespace starplus {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Bias-corrected Adam update on every param with a nonzero gradient.
///
/// Bias correction uses each param's own step_count. A param whose gradient
/// is identically zero this step is left untouched (values, moments and
/// step_count), so a domain tower absent from a batch does not drift on stale
/// momentum.
void adam_step(std::span<Param* const> params, const AdamConfig& cfg);

}  // namespace starplus
