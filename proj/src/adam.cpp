// SPDX-License-Identifier: Apache-2.0

#include "starplus/adam.hpp"

#include <cmath>

#include <fmt/format.h>

#include "starplus/error.hpp"

namespace starplus {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::config, fmt::format("adam: learning_rate must be > 0, got {}",
                                               learning_rate));
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::config,
                fmt::format("adam: betas must lie in [0, 1), got {} and {}", beta1, beta2));
  }
  if (!(eps > 0.0)) throw Error(ErrorCode::config, "adam: eps must be > 0");
}

void adam_step(std::span<Param* const> params, const AdamConfig& cfg) {
  for (Param* p : params) {
    if (p->grad_is_zero()) continue;
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    auto v = p->value.data();
    auto g = p->grad.data();
    auto m1 = p->m1.data();
    auto m2 = p->m2.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
      m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m1[i] / c1;
      const double v_hat = m2[i] / c2;
      v[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace starplus
