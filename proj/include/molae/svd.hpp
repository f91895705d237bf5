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
#ifndef MOLAE_SVD_HPP
#define MOLAE_SVD_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "molae/error.hpp"
#include "molae/matrix.hpp"

namespace molae {

/// Thin SVD of a p x c matrix: u is p x q with orthonormal columns, s holds
/// the q = min(p, c) singular values in non-increasing order, vt is q x c
/// with orthonormal rows, and u * diag(s) * vt reproduces the input.
struct SvdFactorization {
  Matrix u;
  Vec s;
  Matrix vt;
};

struct SvdOptions {
  /// One full pass over all column pairs counts as one sweep.
  std::size_t max_sweeps = 100;
  /// Columns i, j are treated as orthogonal when |a_i . a_j| <= tol * |a_i| |a_j|.
  double converge_tol = 1e-14;
};

namespace detail {

// One-sided Jacobi on a tall or square matrix held as contiguous columns.
// Orthogonalizes the columns of a; accumulates the rotations into v (c x c).
// Returns false if the sweep cap was reached before convergence.
//
// Columns whose norm falls below 1e-14 of the largest column norm are
// deflated to exact zero: rank-deficient inputs leave rounding-noise columns
// that would otherwise rotate forever without converging. The deflation
// perturbs the reconstruction by at most ~1e-14 of the largest singular
// value, far inside the factorization tolerance.
inline bool jacobi_orthogonalize(std::vector<Vec>& a, std::vector<Vec>& v,
                                 const SvdOptions& opts) {
  const std::size_t c = a.size();
  if (c < 2) return true;
  for (std::size_t sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    double max_norm_sq = 0.0;
    for (const Vec& col : a) max_norm_sq = std::max(max_norm_sq, dot(col, col));
    const double deflate_sq = max_norm_sq * 1e-28;
    for (Vec& col : a) {
      if (dot(col, col) <= deflate_sq) std::fill(col.begin(), col.end(), 0.0);
    }
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < c; ++i) {
      for (std::size_t j = i + 1; j < c; ++j) {
        const double alpha = dot(a[i], a[i]);
        const double beta = dot(a[j], a[j]);
        const double gamma = dot(a[i], a[j]);
        if (alpha <= deflate_sq || beta <= deflate_sq) continue;
        if (std::abs(gamma) <= opts.converge_tol * std::sqrt(alpha) * std::sqrt(beta)) {
          continue;
        }
        rotated = true;
        const double tau = (beta - alpha) / (2.0 * gamma);
        const double sign_tau = tau < 0.0 ? -1.0 : 1.0;
        const double t = sign_tau / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t k = 0; k < a[i].size(); ++k) {
          const double ai = a[i][k];
          const double aj = a[j][k];
          a[i][k] = cs * ai - sn * aj;
          a[j][k] = sn * ai + cs * aj;
        }
        for (std::size_t k = 0; k < c; ++k) {
          const double vi = v[i][k];
          const double vj = v[j][k];
          v[i][k] = cs * vi - sn * vj;
          v[j][k] = sn * vi + cs * vj;
        }
      }
    }
    if (!rotated) return true;
  }
  return false;
}

// Fills exactly-zero columns of u with unit vectors orthogonal to all other
// columns so that u keeps orthonormal columns even for rank-deficient input.
inline void complete_orthonormal(std::vector<Vec>& u, const std::vector<bool>& is_zero) {
  const std::size_t c = u.size();
  if (c == 0) return;
  const std::size_t p = u[0].size();
  for (std::size_t j = 0; j < c; ++j) {
    if (!is_zero[j]) continue;
    Vec best;
    double best_norm = -1.0;
    for (std::size_t k = 0; k < p; ++k) {
      Vec cand(p, 0.0);
      cand[k] = 1.0;
      for (std::size_t l = 0; l < c; ++l) {
        if (l == j || (is_zero[l] && l > j)) continue;
        const double proj = dot(u[l], cand);
        for (std::size_t q = 0; q < p; ++q) cand[q] -= proj * u[l][q];
      }
      const double nrm = norm2(cand);
      if (nrm > best_norm) {
        best_norm = nrm;
        best = std::move(cand);
      }
    }
    for (double& x : best) x /= best_norm;
    u[j] = std::move(best);
  }
}

// Jacobi SVD of a tall or square matrix (rows >= cols), returned unsorted as
// column lists: m = u_cols * diag(s) * v_cols^T.
inline void jacobi_svd_tall(const Matrix& m, std::vector<Vec>& u_cols, Vec& s,
                            std::vector<Vec>& v_cols, const SvdOptions& opts) {
  const std::size_t p = m.rows();
  const std::size_t c = m.cols();
  u_cols.assign(c, Vec(p));
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < c; ++j) u_cols[j][i] = m(i, j);
  v_cols.assign(c, Vec(c, 0.0));
  for (std::size_t j = 0; j < c; ++j) v_cols[j][j] = 1.0;

  if (!jacobi_orthogonalize(u_cols, v_cols, opts)) {
    throw NumericalError("svd: no convergence after " + std::to_string(opts.max_sweeps) +
                         " sweeps on " + m.shape_str() + " matrix");
  }

  s.assign(c, 0.0);
  std::vector<bool> is_zero(c, false);
  for (std::size_t j = 0; j < c; ++j) {
    const double nrm = norm2(u_cols[j]);
    s[j] = nrm;
    if (nrm > 0.0) {
      for (double& x : u_cols[j]) x /= nrm;
    } else {
      is_zero[j] = true;
    }
  }

  // Sort by singular value, largest first; ties keep the Jacobi order.
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&s](std::size_t x, std::size_t y) { return s[x] > s[y]; });
  std::vector<Vec> u_sorted(c), v_sorted(c);
  Vec s_sorted(c);
  std::vector<bool> zero_sorted(c);
  for (std::size_t j = 0; j < c; ++j) {
    u_sorted[j] = std::move(u_cols[order[j]]);
    v_sorted[j] = std::move(v_cols[order[j]]);
    s_sorted[j] = s[order[j]];
    zero_sorted[j] = is_zero[order[j]];
  }
  u_cols = std::move(u_sorted);
  v_cols = std::move(v_sorted);
  s = std::move(s_sorted);

  complete_orthonormal(u_cols, zero_sorted);
}

inline Matrix cols_to_matrix(const std::vector<Vec>& cols, std::size_t rows) {
  Matrix m(rows, cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = cols[j][i];
  return m;
}

inline Matrix cols_to_matrix_transposed(const std::vector<Vec>& cols, std::size_t rows) {
  Matrix m(cols.size(), rows);
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows; ++i) m(j, i) = cols[j][i];
  return m;
}

}  // namespace detail

/// One-sided Jacobi SVD. Deterministic: ties keep sweep order, and the sign
/// convention forces the largest-magnitude entry of every left singular
/// vector to be non-negative. Throws NumericalError if the sweep cap is hit.
inline SvdFactorization svd(const Matrix& m, const SvdOptions& opts = {}) {
  if (m.rows() == 0 || m.cols() == 0) throw ArgumentError("svd: empty matrix");
  if (!m.all_finite()) throw ArgumentError("svd: non-finite entries in " + m.shape_str() + " matrix");

  SvdFactorization f;
  std::vector<Vec> u_cols, v_cols;
  if (m.rows() >= m.cols()) {
    detail::jacobi_svd_tall(m, u_cols, f.s, v_cols, opts);
    f.u = detail::cols_to_matrix(u_cols, m.rows());
    f.vt = detail::cols_to_matrix_transposed(v_cols, m.cols());
  } else {
    // Wide input: factor the transpose and swap the roles of u and v.
    detail::jacobi_svd_tall(transpose(m), u_cols, f.s, v_cols, opts);
    f.u = detail::cols_to_matrix(v_cols, m.rows());
    f.vt = detail::cols_to_matrix_transposed(u_cols, m.cols());
  }

  // Sign convention: largest-magnitude entry of each u column non-negative.
  for (std::size_t j = 0; j < f.s.size(); ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < f.u.rows(); ++i) {
      const double mag = std::abs(f.u(i, j));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (f.u(arg, j) < 0.0) {
      for (std::size_t i = 0; i < f.u.rows(); ++i) f.u(i, j) = -f.u(i, j);
      for (std::size_t k = 0; k < f.vt.cols(); ++k) f.vt(j, k) = -f.vt(j, k);
    }
  }
  return f;
}

/// u * diag(s) * vt.
inline Matrix svd_reconstruct(const SvdFactorization& f) {
  Matrix us = f.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= f.s[j];
  return us * f.vt;
}

/// Keeps the m largest singular values and their vectors.
inline SvdFactorization truncate(const SvdFactorization& f, std::size_t m) {
  if (m == 0 || m > f.s.size()) {
    throw ArgumentError("truncate: rank " + std::to_string(m) + " outside [1, " +
                        std::to_string(f.s.size()) + "]");
  }
  SvdFactorization t;
  t.s.assign(f.s.begin(), f.s.begin() + static_cast<std::ptrdiff_t>(m));
  t.u = Matrix(f.u.rows(), m);
  for (std::size_t i = 0; i < f.u.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) t.u(i, j) = f.u(i, j);
  t.vt = row_block(f.vt, 0, m);
  return t;
}

/// Tail energy sum s_i^2 over the values after the first m.
inline double residual_energy(const Vec& s, std::size_t m) {
  double acc = 0.0;
  for (std::size_t i = m; i < s.size(); ++i) acc += s[i] * s[i];
  return acc;
}

/// Best rank-r approximation in Frobenius norm.
inline Matrix low_rank_approx(const Matrix& w, std::size_t r, const SvdOptions& opts = {}) {
  if (r == 0 || r > std::min(w.rows(), w.cols())) {
    throw ArgumentError("low_rank_approx: rank " + std::to_string(r) +
                        " outside [1, min" + w.shape_str() + "]");
  }
  return svd_reconstruct(truncate(svd(w, opts), r));
}

/// Balanced split of the rank-m truncation: a = U_m sqrt(S_m),
/// b = sqrt(S_m) V_m^T, so a * b is the best rank-m approximation.
inline std::pair<Matrix, Matrix> factor_balanced(const SvdFactorization& f, std::size_t m) {
  const SvdFactorization t = truncate(f, m);
  Matrix a = t.u;
  Matrix b = t.vt;
  for (std::size_t j = 0; j < m; ++j) {
    const double root = std::sqrt(t.s[j]);
    for (std::size_t i = 0; i < a.rows(); ++i) a(i, j) *= root;
    for (std::size_t k = 0; k < b.cols(); ++k) b(j, k) *= root;
  }
  return {std::move(a), std::move(b)};
}

/// Count of singular values above tol * s_max (numerical rank).
inline std::size_t numerical_rank(const Vec& s, double tol) {
  if (s.empty()) return 0;
  const double cutoff = tol * s.front();
  std::size_t r = 0;
  for (double v : s)
    if (v > cutoff && v > 0.0) ++r;
  return r;
}

}  // namespace molae

#endif  // MOLAE_SVD_HPP
