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
#ifndef MOLAE_NULLSPACE_HPP
#define MOLAE_NULLSPACE_HPP

#include <cstddef>
#include <vector>

#include "molae/error.hpp"
#include "molae/matrix.hpp"
#include "molae/svd.hpp"

namespace molae {

/// Default relative singular-value threshold for numerical rank decisions.
inline constexpr double kDefaultRankTol = 1e-10;

namespace detail {

// Pads with zero rows until the matrix is at least square, which exposes the
// full set of right singular directions in the thin SVD.
inline Matrix pad_rows_to_square(const Matrix& w) {
  if (w.rows() >= w.cols()) return w;
  Matrix out(w.cols(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = w(i, j);
  return out;
}

}  // namespace detail

/// Orthonormal basis of ker(w): the right singular directions whose singular
/// value is at most tol * s_max, returned as the columns of an n x nullity
/// matrix (possibly zero columns wide).
inline Matrix nullspace_basis(const Matrix& w, double tol = kDefaultRankTol) {
  if (w.rows() == 0 || w.cols() == 0) throw ArgumentError("nullspace_basis: empty matrix");
  const SvdFactorization f = svd(detail::pad_rows_to_square(w));
  const double cutoff = f.s.empty() ? 0.0 : tol * f.s.front();
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < f.s.size(); ++i)
    if (f.s[i] <= cutoff) kept.push_back(i);
  Matrix basis(w.cols(), kept.size());
  for (std::size_t j = 0; j < kept.size(); ++j)
    for (std::size_t i = 0; i < w.cols(); ++i) basis(i, j) = f.vt(kept[j], i);
  return basis;
}

/// Dimension of the intersection of the kernels of all given matrices,
/// computed as n minus the numerical rank of their vertical stack.
inline std::size_t common_nullspace_dim(const std::vector<Matrix>& ws,
                                        double tol = kDefaultRankTol) {
  if (ws.empty()) throw ArgumentError("common_nullspace_dim: empty matrix list");
  const std::size_t n = ws.front().cols();
  for (const Matrix& w : ws) {
    if (w.cols() != n) throw ArgumentError("common_nullspace_dim: column count mismatch");
  }
  const Matrix stacked = vstack(ws);
  const std::size_t rank = numerical_rank(svd(stacked).s, tol);
  return n - rank;
}

}  // namespace molae

#endif  // MOLAE_NULLSPACE_HPP
