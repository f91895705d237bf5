/* Copyright 2026 the molae authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef MOLAE_MATRIX_HPP
#define MOLAE_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "molae/error.hpp"

namespace molae {

using Vec = std::vector<double>;

/// Dense row-major matrix of 64-bit reals. The single weight/activation
/// carrier used throughout the library; all transformation math runs in
/// double precision regardless of the on-disk dtype.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ArgumentError("Matrix: data length " + std::to_string(data_.size()) +
                          " does not equal " + std::to_string(rows_) + "x" +
                          std::to_string(cols_));
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  /// Square matrix with the given values on the diagonal.
  static Matrix diagonal(const Vec& d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  Vec row(std::size_t i) const {
    return Vec(data_.begin() + static_cast<std::ptrdiff_t>(i * cols_),
               data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols_));
  }

  void set_row(std::size_t i, const Vec& v) {
    if (v.size() != cols_) throw ArgumentError("set_row: length mismatch");
    std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ArgumentError("matmul: shape mismatch " + a.shape_str() + " * " + b.shape_str());
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

inline Vec operator*(const Matrix& a, const Vec& x) {
  if (a.cols() != x.size()) {
    throw ArgumentError("matvec: shape mismatch " + a.shape_str() + " * vec[" +
                        std::to_string(x.size()) + "]");
  }
  Vec y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    y[i] = acc;
  }
  return y;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ArgumentError("matrix add: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.values()[i] += b.values()[i];
  return c;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ArgumentError("matrix sub: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.values()[i] -= b.values()[i];
  return c;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (double& v : c.values()) v *= s;
  return c;
}

/// y^T x
inline double dot(const Vec& x, const Vec& y) {
  if (x.size() != y.size()) throw ArgumentError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

inline double norm2(const Vec& x) { return std::sqrt(dot(x, x)); }

inline double frobenius_norm(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  return std::sqrt(acc);
}

inline double frobenius_norm_sq(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  return acc;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ArgumentError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

/// A^T x without materializing the transpose.
inline Vec transpose_matvec(const Matrix& a, const Vec& x) {
  if (a.rows() != x.size()) {
    throw ArgumentError("transpose_matvec: shape mismatch " + a.shape_str() +
                        "^T * vec[" + std::to_string(x.size()) + "]");
  }
  Vec y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += a(i, j) * xi;
  }
  return y;
}

/// acc += s * u v^T (rank-one update used by the backward passes).
inline void add_outer(Matrix& acc, double s, const Vec& u, const Vec& v) {
  if (acc.rows() != u.size() || acc.cols() != v.size())
    throw ArgumentError("add_outer: shape mismatch");
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double su = s * u[i];
    if (su == 0.0) continue;
    for (std::size_t j = 0; j < v.size(); ++j) acc(i, j) += su * v[j];
  }
}

/// Vertical concatenation; all blocks must share a column count.
inline Matrix vstack(const std::vector<Matrix>& blocks) {
  if (blocks.empty()) throw ArgumentError("vstack: empty block list");
  const std::size_t cols = blocks.front().cols();
  std::size_t rows = 0;
  for (const Matrix& b : blocks) {
    if (b.cols() != cols) throw ArgumentError("vstack: column count mismatch");
    rows += b.rows();
  }
  Matrix out(rows, cols);
  std::size_t at = 0;
  for (const Matrix& b : blocks) {
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(at));
    at += b.size();
  }
  return out;
}

/// Rows [r0, r0+nrows) as a new matrix.
inline Matrix row_block(const Matrix& a, std::size_t r0, std::size_t nrows) {
  if (r0 + nrows > a.rows()) throw ArgumentError("row_block: out of range");
  Matrix out(nrows, a.cols());
  std::copy(a.values().begin() + static_cast<std::ptrdiff_t>(r0 * a.cols()),
            a.values().begin() + static_cast<std::ptrdiff_t>((r0 + nrows) * a.cols()),
            out.values().begin());
  return out;
}

}  // namespace molae

#endif  // MOLAE_MATRIX_HPP
