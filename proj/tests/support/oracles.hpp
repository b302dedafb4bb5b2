// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used by the tests. They are written
// for clarity, not speed, and share no code with the library kernels.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "starplus/matrix.hpp"
#include "starplus/param.hpp"

namespace starplus::oracle {

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

inline Matrix relu(Matrix m) {
  for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
  return m;
}

inline Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix out = oracle::matmul(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b(0, j);
  }
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

/// Mann-Whitney statistic by comparing every positive/negative pair.
/// Returns -1 when a class is missing.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& y) {
  std::uint64_t twice_credit = 0;
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
  for (std::uint8_t v : y) (v ? pos : neg) += 1;
  if (pos == 0 || neg == 0) return -1.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (y[j]) continue;
      if (scores[i] > scores[j]) twice_credit += 2;
      if (scores[i] == scores[j]) twice_credit += 1;
    }
  }
  return static_cast<double>(twice_credit) /
         (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

/// Mean cross-entropy straight from the probability-space definition, in
/// extended precision.
inline long double naive_bce(const std::vector<double>& logits, const std::vector<double>& y) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const long double z = logits[i];
    const long double p = 1.0L / (1.0L + std::exp(-z));
    total += -(y[i] * std::log(p) + (1.0L - y[i]) * std::log(1.0L - p));
  }
  return total / static_cast<long double>(logits.size());
}

inline long double naive_logloss(const std::vector<double>& p, const std::vector<std::uint8_t>& y) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const long double q = std::fmin(std::fmax(p[i], 1e-15), 1.0 - 1e-15);
    total += y[i] ? -std::log(q) : -std::log(1.0L - q);
  }
  return total / static_cast<long double>(p.size());
}

/// Central difference of `f` with respect to one entry of `p`.
inline double numeric_partial(const std::function<double()>& f, Param& p, std::size_t i,
                              double h = 1e-6) {
  const double saved = p.value.data()[i];
  p.value.data()[i] = saved + h;
  const double up = f();
  p.value.data()[i] = saved - h;
  const double down = f();
  p.value.data()[i] = saved;
  return (up - down) / (2.0 * h);
}

/// |a - b| relative to the larger magnitude, floored so that near-zero pairs
/// compare absolutely (finite differences carry ~1e-10 noise).
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::fabs(a - b) / std::fmax(std::fmax(std::fabs(a), std::fabs(b)), floor);
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.data()) v = n(rng);
  return m;
}

}  // namespace starplus::oracle
