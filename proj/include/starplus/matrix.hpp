// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrix of doubles plus the handful of kernels the layers
// need. Every kernel accumulates in a fixed index order so results are
// reproducible bit-for-bit and independent per output row.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace starplus {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Builds from nested rows; all rows must have equal length.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  void fill(double v);
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;

  /// "RxC", used in error messages.
  std::string shape_string() const;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a (n x k) * b (k x m)
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T (k x n)^T * b (k x m) -> n x m
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
/// a (n x k) * b^T where b is (m x k) -> n x m
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

/// Adds a 1 x cols row vector to every row in place.
void add_row_vector(Matrix& m, const Matrix& row);
/// Column sums as a 1 x cols matrix.
Matrix column_sums(const Matrix& m);

/// In-place a += b (same shape required).
void add_inplace(Matrix& a, const Matrix& b);

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);
/// dst.row(rows[i]) = src.row(i)
void scatter_rows(Matrix& dst, const Matrix& src, std::span<const std::size_t> rows);

/// Horizontal concatenation of equally tall matrices.
Matrix hconcat(std::span<const Matrix* const> parts);
/// Columns [begin, begin + count).
Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t count);

double frobenius_norm(const Matrix& m);

}  // namespace starplus
