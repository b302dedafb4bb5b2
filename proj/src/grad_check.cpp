// SPDX-License-Identifier: Apache-2.0

#include "starplus/grad_check.hpp"

#include <cmath>

#include <fmt/format.h>

#include "starplus/error.hpp"
#include "starplus/layers.hpp"

namespace starplus {

namespace {

double evaluate(const std::function<double()>& f, const std::string& where) {
  const double v = f();
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::evaluation,
                fmt::format("grad_check: closure returned non-finite value {} ({})", v, where));
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<double()>& loss_and_grads,
                           std::span<Param* const> params, const GradCheckOptions& options) {
  ActivationProbe probe;
  evaluate(loss_and_grads, "analytic pass");
  const std::uint64_t base_signature = probe.signature();

  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Param* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    for (std::size_t r = 0; r < p.value.rows(); ++r) {
      for (std::size_t c = 0; c < p.value.cols(); ++c) {
        double& v = p.value(r, c);
        const double original = v;
        const double h = options.step * std::max(1.0, std::abs(original));

        v = original + h;
        probe.reset();
        const double f_plus = evaluate(loss_and_grads, p.name);
        const bool kink_plus = probe.signature() != base_signature;

        v = original - h;
        probe.reset();
        const double f_minus = evaluate(loss_and_grads, p.name);
        const bool kink_minus = probe.signature() != base_signature;
        v = original;

        if (kink_plus || kink_minus) {
          ++report.skipped;
          continue;
        }

        GradCheckEntry entry;
        entry.param = p.name;
        entry.row = r;
        entry.col = c;
        entry.analytic = analytic[pi](r, c);
        entry.numeric = (f_plus - f_minus) / (2.0 * h);
        const double denom = std::max({std::abs(entry.analytic), std::abs(entry.numeric),
                                       options.denominator_floor});
        entry.rel_error = std::abs(entry.analytic - entry.numeric) / denom;
        ++report.checked;

        if (report.checked == 1 || entry.rel_error > report.max_rel_error) {
          report.max_rel_error = entry.rel_error;
          report.worst = entry;
        }
        if (entry.rel_error > options.tolerance) {
          report.passed = false;
          if (report.failures.size() < options.max_failures_reported) {
            report.failures.push_back(entry);
          }
        }
      }
    }
  }

  for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
  return report;
}

}  // namespace starplus
