// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient verification over a set of params.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "starplus/param.hpp"

namespace starplus {

struct GradCheckOptions {
  double tolerance = 1e-4;
  /// Perturbation is step * max(1, |value|).
  double step = 1e-5;
  /// Relative error denominator is max(|analytic|, |numeric|, floor).
  double denominator_floor = 1e-6;
  std::size_t max_failures_reported = 16;
};

struct GradCheckEntry {
  std::string param;
  std::size_t row = 0;
  std::size_t col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Entries whose perturbation flipped a relu unit (non-differentiable point).
  std::size_t skipped = 0;
  GradCheckEntry worst;
  std::vector<GradCheckEntry> failures;
};

/// `loss_and_grads` must zero the grads of `params`, run forward and backward,
/// and return the scalar loss. It is called once for the analytic gradient and
/// twice per entry for the numeric one. Values and grads are restored on exit.
GradCheckReport grad_check(const std::function<double()>& loss_and_grads,
                           std::span<Param* const> params, const GradCheckOptions& options = {});

}  // namespace starplus
