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
#ifndef MOLAE_CHOLESKY_HPP
#define MOLAE_CHOLESKY_HPP

#include <cmath>
#include <cstddef>

#include "molae/error.hpp"
#include "molae/matrix.hpp"

namespace molae {

/// Lower-triangular factor with strictly positive diagonal: l * l^T = input.
struct CholeskyFactor {
  Matrix l;
};

/// Cholesky-Crout factorization of a symmetric positive definite matrix.
/// Symmetry is enforced up to 1e-9 relative asymmetry. A pivot at or below
/// 1e-12 of the largest diagonal entry counts as numerically non-positive
/// and raises NotPositiveDefiniteError so the caller can regularize and
/// retry; rank-deficient Gram matrices land there through rounding residue
/// rather than exact zeros.
inline CholeskyFactor cholesky(const Matrix& g) {
  const std::size_t n = g.rows();
  if (n == 0 || g.cols() != n) {
    throw ArgumentError("cholesky: matrix must be square, got " + g.shape_str());
  }
  double scale = 0.0;
  for (double v : g.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(g(i, j) - g(j, i)) > 1e-9 * std::max(scale, 1e-300)) {
        throw ArgumentError("cholesky: matrix is not symmetric at (" + std::to_string(i) +
                            "," + std::to_string(j) + ")");
      }
    }
  }
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, g(i, i));
  const double pivot_tol = 1e-12 * max_diag;

  CholeskyFactor f{Matrix(n, n)};
  Matrix& l = f.l;
  for (std::size_t j = 0; j < n; ++j) {
    double d = g(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d <= pivot_tol || !std::isfinite(d)) {
      throw NotPositiveDefiniteError("cholesky: non-positive pivot " + std::to_string(d) +
                                     " at column " + std::to_string(j));
    }
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double sum = g(i, j);
      for (std::size_t k = 0; k < j; ++k) sum -= l(i, k) * l(j, k);
      l(i, j) = sum / l(j, j);
    }
  }
  return f;
}

/// Solves L * y = b for lower-triangular L (forward substitution).
inline Vec solve_lower(const Matrix& l, const Vec& b) {
  const std::size_t n = l.rows();
  if (l.cols() != n || b.size() != n) throw ArgumentError("solve_lower: shape mismatch");
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = b[i];
    for (std::size_t k = 0; k < i; ++k) acc -= l(i, k) * y[k];
    y[i] = acc / l(i, i);
  }
  return y;
}

/// Solves L^T * y = b for lower-triangular L (backward substitution).
inline Vec solve_lower_transposed(const Matrix& l, const Vec& b) {
  const std::size_t n = l.rows();
  if (l.cols() != n || b.size() != n) throw ArgumentError("solve_lower_transposed: shape mismatch");
  Vec y(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double acc = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) acc -= l(k, ii) * y[k];
    y[ii] = acc / l(ii, ii);
  }
  return y;
}

/// Solves (L L^T) X = B column by column.
inline Matrix cholesky_solve(const CholeskyFactor& f, const Matrix& b) {
  const std::size_t n = f.l.rows();
  if (b.rows() != n) throw ArgumentError("cholesky_solve: shape mismatch");
  Matrix x(n, b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    Vec col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = b(i, j);
    col = solve_lower_transposed(f.l, solve_lower(f.l, col));
    for (std::size_t i = 0; i < n; ++i) x(i, j) = col[i];
  }
  return x;
}

/// X L = B  =>  X = B L^{-1}, solved row by row via L^T x^T = b^T.
inline Matrix solve_right_lower(const Matrix& b, const Matrix& l) {
  if (b.cols() != l.rows()) throw ArgumentError("solve_right_lower: shape mismatch");
  Matrix x(b.rows(), b.cols());
  for (std::size_t i = 0; i < b.rows(); ++i) {
    // row_i(X) * L = row_i(B)  <=>  L^T row_i(X)^T = row_i(B)^T
    Vec sol = solve_lower_transposed(l, b.row(i));
    x.set_row(i, sol);
  }
  return x;
}

}  // namespace molae

#endif  // MOLAE_CHOLESKY_HPP
