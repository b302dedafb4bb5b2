// SPDX-License-Identifier: Apache-2.0

#include "starplus/matrix.hpp"

#include <cmath>

#include <fmt/format.h>

#include "starplus/error.hpp"

namespace starplus {

namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw Error(ErrorCode::dimension,
                fmt::format("{}: incompatible shapes {} and {}", op, a.shape_string(),
                            b.shape_string()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::dimension,
                fmt::format("matrix data length {} does not match shape {}x{}", data_.size(),
                            rows_, cols_));
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.front().size();
  std::vector<double> data;
  data.reserve(n * m);
  for (const auto& r : rows) {
    if (r.size() != m) {
      throw Error(ErrorCode::dimension, "ragged rows in Matrix::from_rows");
    }
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(n, m, std::move(data));
}

void Matrix::fill(double v) {
  for (double& x : data_) x = v;
}

bool Matrix::all_finite() const noexcept {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Matrix::shape_string() const { return fmt::format("{}x{}", rows_, cols_); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  Matrix out(a.rows(), b.cols());
  const std::size_t k_dim = a.cols();
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    const double* x = a.row(i).data();
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double xv = x[k];
      const double* w = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += xv * w[j];
    }
  }
  return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_at_b", a, b);
  Matrix out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* x = a.row(r).data();
    const double* g = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double xv = x[i];
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += xv * g[j];
    }
  }
  return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_a_bt", a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* x = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* w = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += x[k] * w[k];
      out(i, j) = s;
    }
  }
  return out;
}

void add_row_vector(Matrix& m, const Matrix& row) {
  require(row.rows() == 1 && row.cols() == m.cols(), "add_row_vector", m, row);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += row(0, j);
  }
}

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += r[j];
  }
  return out;
}

void add_inplace(Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "add_inplace", a, b);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) {
      throw Error(ErrorCode::index,
                  fmt::format("gather_rows: row {} out of range for {}", rows[i], m.shape_string()));
    }
    auto src = m.row(rows[i]);
    auto dst = out.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

void scatter_rows(Matrix& dst, const Matrix& src, std::span<const std::size_t> rows) {
  require(src.rows() == rows.size() && src.cols() == dst.cols(), "scatter_rows", dst, src);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto s = src.row(i);
    auto d = dst.row(rows[i]);
    std::copy(s.begin(), s.end(), d.begin());
  }
}

Matrix hconcat(std::span<const Matrix* const> parts) {
  if (parts.empty()) return {};
  const std::size_t n = parts.front()->rows();
  std::size_t total = 0;
  for (const Matrix* p : parts) {
    require(p->rows() == n, "hconcat", *parts.front(), *p);
    total += p->cols();
  }
  Matrix out(n, total);
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = out.row(i);
    std::size_t offset = 0;
    for (const Matrix* p : parts) {
      auto src = p->row(i);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += p->cols();
    }
  }
  return out;
}

Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t count) {
  if (begin + count > m.cols()) {
    throw Error(ErrorCode::dimension,
                fmt::format("column_slice [{}, {}) out of range for {}", begin, begin + count,
                            m.shape_string()));
  }
  Matrix out(m.rows(), count);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto src = m.row(i).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return std::sqrt(s);
}

}  // namespace starplus
