// SPDX-License-Identifier: Apache-2.0

#include "starplus/loss.hpp"

#include <cmath>

#include <fmt/format.h>

#include "starplus/error.hpp"

namespace starplus {

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

BceResult bce_loss(const Matrix& logits, const Matrix& labels) {
  if (logits.cols() != 1 || !logits.same_shape(labels)) {
    throw Error(ErrorCode::dimension,
                fmt::format("bce_loss: logits {} and labels {} must both be n x 1",
                            logits.shape_string(), labels.shape_string()));
  }
  const std::size_t n = logits.rows();
  if (n == 0) throw Error(ErrorCode::validation, "bce_loss: empty batch");
  BceResult result;
  result.grad = Matrix(n, 1);
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = labels(i, 0);
    if (y != 0.0 && y != 1.0) {
      throw Error(ErrorCode::validation,
                  fmt::format("bce_loss: label {} at row {} is not 0 or 1", y, i));
    }
    const double z = logits(i, 0);
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    result.grad(i, 0) = (sigmoid(z) - y) * inv_n;
  }
  result.loss = total * inv_n;
  return result;
}

}  // namespace starplus
