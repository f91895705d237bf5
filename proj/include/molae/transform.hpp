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
#ifndef MOLAE_TRANSFORM_HPP
#define MOLAE_TRANSFORM_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "molae/cholesky.hpp"
#include "molae/error.hpp"
#include "molae/latent.hpp"
#include "molae/matrix.hpp"
#include "molae/moe.hpp"
#include "molae/nullspace.hpp"
#include "molae/ops.hpp"
#include "molae/rng.hpp"
#include "molae/svd.hpp"

namespace molae {

enum class TransformMode : std::uint8_t { kPlain = 0, kActivationAware = 1 };

struct TransformOptions {
  std::size_t latent_dim = 0;   // m; must equal the source intermediate dim
  std::size_t target_rank = 0;  // r <= m; 0 means full rank (reduction off)
  std::size_t group_size = 1;   // k
  OpMask op_mask = OpMask::all();
  TransformMode mode = TransformMode::kPlain;
  double lambda = 0.0;  // 0 means auto: 1e-6 * trace(G) / dim(G) on Cholesky failure
  double rank_tol = kDefaultRankTol;
  // Probe check recorded in the report after a layer transform.
  std::size_t report_probes = 16;
  std::uint64_t report_seed = 97;
};

/// Calibration inputs: per expert, the hidden-dim column matrix of inputs the
/// router sent to that expert (n x s_i, possibly empty).
struct ActivationBatch {
  std::vector<Matrix> per_expert;
};

/// Best rank-r approximation of each expert operator, computed independently
/// per expert. Enlarging the nullspaces this way can only help the later
/// shared factorization. Inputs already at or below rank r pass through
/// unchanged.
inline std::vector<Matrix> rank_reduce_experts(const std::vector<Matrix>& ws, std::size_t r) {
  if (ws.empty()) throw ArgumentError("rank_reduce_experts: empty list");
  std::vector<Matrix> out;
  out.reserve(ws.size());
  for (const Matrix& w : ws) {
    const std::size_t full = std::min(w.rows(), w.cols());
    if (r == 0 || r > full)
      throw ArgumentError("rank_reduce_experts: rank " + std::to_string(r) +
                          " outside [1, min" + w.shape_str() + "]");
    out.push_back(r == full ? w : low_rank_approx(w, r));
  }
  return out;
}

/// Joint factorization of a group of same-shape operators {W^i} into
/// per-expert blocks {A^i} and one shared projection B with A^i B ~ W^i:
/// stack the W^i vertically, take the rank-m truncated SVD, split
/// U_m sqrt(S_m) into row blocks and keep B = sqrt(S_m) V_m^T. The residual
/// is the discarded tail energy of the stacked spectrum, which is optimal in
/// Frobenius norm by Eckart-Young-Mirsky.
struct FactorResult {
  std::vector<Matrix> as;  // one m x m_latent block per expert
  Matrix b;                // m_latent x n
  double residual = 0.0;   // sum of squared discarded singular values
  double stack_energy = 0.0;  // total squared spectrum of the stack
  Vec spectrum;            // singular values of the (whitened) stack
};

inline FactorResult factor_group(const std::vector<Matrix>& ws, std::size_t m_latent) {
  if (ws.empty()) throw ArgumentError("factor_group: empty group");
  const Matrix stacked = vstack(ws);
  if (m_latent == 0 || m_latent > std::min(stacked.rows(), stacked.cols()))
    throw ArgumentError("factor_group: latent dim " + std::to_string(m_latent) +
                        " outside [1, min" + stacked.shape_str() + "]");
  const SvdFactorization f = svd(stacked);
  auto [a, b] = factor_balanced(f, m_latent);

  FactorResult r;
  r.b = std::move(b);
  r.residual = residual_energy(f.s, m_latent);
  r.stack_energy = residual_energy(f.s, 0);
  r.spectrum = f.s;
  const std::size_t block_rows = ws.front().rows();
  for (std::size_t i = 0; i < ws.size(); ++i)
    r.as.push_back(row_block(a, i * block_rows, block_rows));
  return r;
}

struct RefinedResult {
  std::vector<Matrix> as;
  Matrix b;
  double lambda_used = 0.0;
  bool regularized = false;
  /// 0-based positions within the group whose activation slice was empty and
  /// whose latent map was therefore refit by plain least squares against B.
  std::vector<std::size_t> plain_fallback;
  double whitened_residual = 0.0;
  double whitened_energy = 0.0;
  Vec spectrum;
};

namespace detail {

// Least-squares A = W B^T (B B^T)^{-1}, the best latent map for a fixed
// shared projection under the plain Frobenius objective.
inline Matrix fit_latent_given_projection(const Matrix& w, const Matrix& b) {
  Matrix bbt = b * transpose(b);
  CholeskyFactor f{};
  try {
    f = cholesky(bbt);
  } catch (const NotPositiveDefiniteError&) {
    double tr = 0.0;
    for (std::size_t i = 0; i < bbt.rows(); ++i) tr += bbt(i, i);
    const double ridge = 1e-12 * std::max(tr / static_cast<double>(bbt.rows()), 1e-300);
    for (std::size_t i = 0; i < bbt.rows(); ++i) bbt(i, i) += ridge;
    f = cholesky(bbt);
  }
  return transpose(cholesky_solve(f, b * transpose(w)));
}

}  // namespace detail

/// Activation-aware group factorization: minimizes the calibrated objective
/// sum_i |(W^i - A^i B) X|_F^2 over the pooled group activations by whitening
/// with the Cholesky factor of G = sum_i X^i X^i^T, factoring W L via the
/// truncated SVD, and unwhitening the shared projection (B picks up L^{-1};
/// the blocks of U_m sqrt(S_m) are already the G-weighted latent maps). If G
/// is not positive definite the factorization retries once with G + lambda I.
inline RefinedResult factor_group_refined(const std::vector<Matrix>& ws,
                                          const std::vector<Matrix>& xs, std::size_t m_latent,
                                          double lambda = 0.0) {
  if (ws.empty()) throw ArgumentError("factor_group_refined: empty group");
  if (xs.size() != ws.size())
    throw ArgumentError("factor_group_refined: need one activation slice per expert");
  const std::size_t n = ws.front().cols();

  RefinedResult out;
  std::size_t total_samples = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() == 0) {
      out.plain_fallback.push_back(i);
      continue;
    }
    if (xs[i].rows() != n)
      throw ArgumentError("factor_group_refined: activation slice " + std::to_string(i) +
                          " must have " + std::to_string(n) + " rows, got " +
                          xs[i].shape_str());
    total_samples += xs[i].cols();
  }

  if (total_samples == 0) {
    // No calibration data at all: the whole group falls back to plain mode.
    FactorResult plain = factor_group(ws, m_latent);
    out.as = std::move(plain.as);
    out.b = std::move(plain.b);
    out.whitened_residual = plain.residual;
    out.whitened_energy = plain.stack_energy;
    out.spectrum = std::move(plain.spectrum);
    return out;
  }

  // Pooled Gram over the group's calibration inputs.
  Matrix gram(n, n);
  for (const Matrix& x : xs) {
    if (x.size() == 0) continue;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s = 0; s < x.cols(); ++s) {
        const double xi = x(i, s);
        if (xi == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) gram(i, j) += xi * x(j, s);
      }
  }

  CholeskyFactor chol{};
  try {
    chol = cholesky(gram);
  } catch (const NotPositiveDefiniteError&) {
    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) tr += gram(i, i);
    out.lambda_used = lambda > 0.0 ? lambda : 1e-6 * tr / static_cast<double>(n);
    out.regularized = true;
    for (std::size_t i = 0; i < n; ++i) gram(i, i) += out.lambda_used;
    try {
      chol = cholesky(gram);
    } catch (const NotPositiveDefiniteError&) {
      throw NumericalError("factor_group_refined: Gram matrix not positive definite even with "
                           "lambda " + std::to_string(out.lambda_used));
    }
  }

  const Matrix stacked = vstack(ws);
  if (m_latent == 0 || m_latent > std::min(stacked.rows(), stacked.cols()))
    throw ArgumentError("factor_group_refined: latent dim " + std::to_string(m_latent) +
                        " outside [1, min" + stacked.shape_str() + "]");
  const Matrix whitened = stacked * chol.l;
  const SvdFactorization f = svd(whitened);
  auto [a, b_whitened] = factor_balanced(f, m_latent);
  out.b = solve_right_lower(b_whitened, chol.l);  // B = sqrt(S) V^T L^{-1}
  out.whitened_residual = residual_energy(f.s, m_latent);
  out.whitened_energy = residual_energy(f.s, 0);
  out.spectrum = f.s;

  const std::size_t block_rows = ws.front().rows();
  for (std::size_t i = 0; i < ws.size(); ++i)
    out.as.push_back(row_block(a, i * block_rows, block_rows));
  for (std::size_t i : out.plain_fallback)
    out.as[i] = detail::fit_latent_given_projection(ws[i], out.b);
  return out;
}

struct FactorizabilityCheck {
  bool feasible = false;
  std::size_t common_nullity = 0;
};

/// Exact factorization with a shared rank-m_latent projection exists iff the
/// experts' kernels share a subspace of dimension at least n - m_latent,
/// i.e. iff the stacked operator has numerical rank at most m_latent.
inline FactorizabilityCheck check_exact_factorizability(const std::vector<Matrix>& ws,
                                                        std::size_t m_latent,
                                                        double tol = kDefaultRankTol) {
  FactorizabilityCheck c;
  c.common_nullity = common_nullspace_dim(ws, tol);
  const std::size_t n = ws.front().cols();
  c.feasible = m_latent >= n || c.common_nullity >= n - m_latent;
  return c;
}

struct DeviationStats {
  double max_rel_dev = 0.0;
  double mean_rel_dev = 0.0;
  double routing_agreement = 1.0;  // fraction of probes with identical expert sets
  std::size_t probes = 0;
  std::uint64_t seed = 0;
};

/// Forward-output deviation between two layers over seeded standard-normal
/// probes. Relative deviation per probe is |ya - yb| / max(|ya|, |yb|).
inline DeviationStats verify_equivalence(const AnyLayer& a, const AnyLayer& b,
                                         std::size_t probes, std::uint64_t seed) {
  if (any_hidden_dim(a) != any_hidden_dim(b) || any_num_experts(a) != any_num_experts(b) ||
      any_top_k(a) != any_top_k(b))
    throw ArgumentError("verify_equivalence: layer configurations differ");
  if (probes == 0) throw ArgumentError("verify_equivalence: need at least one probe");

  Rng rng(seed);
  DeviationStats stats;
  stats.probes = probes;
  stats.seed = seed;
  double sum_rel = 0.0;
  std::size_t agree = 0;
  for (std::size_t p = 0; p < probes; ++p) {
    const Vec x = rng.gaussian_vec(any_hidden_dim(a));
    const Vec ya = any_forward(a, x);
    const Vec yb = any_forward(b, x);
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < ya.size(); ++i) {
      diff += (ya[i] - yb[i]) * (ya[i] - yb[i]);
      na += ya[i] * ya[i];
      nb += yb[i] * yb[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    const double rel = denom > 0.0 ? std::sqrt(diff) / denom : 0.0;
    stats.max_rel_dev = std::max(stats.max_rel_dev, rel);
    sum_rel += rel;

    std::vector<std::size_t> sa = any_route(a, x).indices;
    std::vector<std::size_t> sb = any_route(b, x).indices;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    if (sa == sb) ++agree;
  }
  stats.mean_rel_dev = sum_rel / static_cast<double>(probes);
  stats.routing_agreement = static_cast<double>(agree) / static_cast<double>(probes);
  return stats;
}

/// Per-(group, operator) factorization diagnostics plus the layer-level
/// probe deviation.
struct TransformReport {
  struct Entry {
    std::size_t group = 0;  // 1-based
    Op op = Op::kUp;
    double residual_sq = 0.0;      // discarded energy in the factorization metric
    double stack_energy = 0.0;     // total spectrum energy in the same metric
    double relative_residual = 0.0;
    double retained_energy = 0.0;
    bool exact = false;  // stacked numerical rank <= latent dim at rank_tol
    std::size_t common_nullity = 0;
    bool activation_aware = false;
    double lambda_used = 0.0;
    bool regularized = false;
    std::vector<std::size_t> plain_fallback_experts;  // 1-based expert ids
  };
  std::vector<Entry> entries;
  double total_residual_sq = 0.0;
  DeviationStats forward_deviation;
};

/// Converts a trained mixture-of-experts layer into the latent-expert form:
/// per operator in the mask and per expert group, optionally reduce each
/// expert's rank, then factor the group jointly (plain or activation-aware).
/// The down operator is handled in reversed orientation: transpose, factor,
/// transpose back. Operators outside the mask are copied dense; the router is
/// copied unchanged. Any failure throws before a layer is produced.
inline std::pair<MolaeLayer, TransformReport> transform_layer(
    const MoeLayer& src, const TransformOptions& opts,
    const ActivationBatch* acts = nullptr) {
  const MoeConfig& sc = src.config();
  const std::size_t n = sc.hidden_dim;
  const std::size_t m = sc.intermediate_dim;
  const std::size_t N = sc.num_experts;

  if (opts.latent_dim != m)
    throw ArgumentError("transform: latent dim " + std::to_string(opts.latent_dim) +
                        " must equal the source intermediate dim " + std::to_string(m));
  if (m > n)
    throw ArgumentError("transform: requires intermediate dim <= hidden dim, got m=" +
                        std::to_string(m) + " n=" + std::to_string(n));
  const std::size_t rank = opts.target_rank == 0 ? m : opts.target_rank;
  if (rank > opts.latent_dim)
    throw ArgumentError("transform: target rank " + std::to_string(rank) +
                        " exceeds latent dim " + std::to_string(opts.latent_dim));
  if (opts.group_size == 0 || opts.group_size > N)
    throw ArgumentError("transform: group size outside [1, N]");
  const bool refined = opts.mode == TransformMode::kActivationAware;
  if (refined && acts == nullptr)
    throw ArgumentError("transform: activation-aware mode requires an activation batch");
  if (refined && acts->per_expert.size() != N)
    throw ArgumentError("transform: activation batch must cover all experts");

  const std::size_t num_groups = group_count(N, opts.group_size);
  std::vector<LatentGroup> groups(num_groups);
  std::vector<LatentExpert> latent_experts(N);
  std::vector<DenseOperators> dense_experts(N);
  TransformReport report;

  for (Op op : kAllOps) {
    if (!opts.op_mask.contains(op)) {
      for (std::size_t i = 0; i < N; ++i) {
        const ExpertWeights& e = src.expert(i + 1);
        if (op == Op::kUp) dense_experts[i].w_up = e.w_up;
        if (op == Op::kGate) dense_experts[i].w_gate = e.w_gate;
        if (op == Op::kDown) dense_experts[i].w_down = e.w_down;
      }
      continue;
    }

    for (std::size_t g = 0; g < num_groups; ++g) {
      const std::size_t lo = g * opts.group_size;
      const std::size_t hi = std::min(lo + opts.group_size, N);

      std::vector<Matrix> ws;
      for (std::size_t i = lo; i < hi; ++i) {
        const ExpertWeights& e = src.expert(i + 1);
        switch (op) {
          case Op::kUp: ws.push_back(e.w_up); break;
          case Op::kGate: ws.push_back(e.w_gate); break;
          case Op::kDown: ws.push_back(transpose(e.w_down)); break;
        }
      }
      const std::vector<Matrix> reduced = rank_reduce_experts(ws, rank);

      TransformReport::Entry entry;
      entry.group = g + 1;
      entry.op = op;
      entry.common_nullity = common_nullspace_dim(reduced, opts.rank_tol);
      entry.activation_aware = refined;

      std::vector<Matrix> as;
      Matrix b;
      Vec spectrum;
      if (refined) {
        std::vector<Matrix> slices;
        for (std::size_t i = lo; i < hi; ++i) slices.push_back(acts->per_expert[i]);
        RefinedResult rr = factor_group_refined(reduced, slices, opts.latent_dim, opts.lambda);
        as = std::move(rr.as);
        b = std::move(rr.b);
        spectrum = std::move(rr.spectrum);
        entry.residual_sq = rr.whitened_residual;
        entry.stack_energy = rr.whitened_energy;
        entry.lambda_used = rr.lambda_used;
        entry.regularized = rr.regularized;
        for (std::size_t pos : rr.plain_fallback)
          entry.plain_fallback_experts.push_back(lo + pos + 1);
      } else {
        FactorResult fr = factor_group(reduced, opts.latent_dim);
        as = std::move(fr.as);
        b = std::move(fr.b);
        spectrum = std::move(fr.spectrum);
        entry.residual_sq = fr.residual;
        entry.stack_energy = fr.stack_energy;
      }
      entry.relative_residual =
          entry.stack_energy > 0.0 ? entry.residual_sq / entry.stack_energy : 0.0;
      entry.retained_energy = entry.stack_energy - entry.residual_sq;
      entry.exact = numerical_rank(spectrum, opts.rank_tol) <= opts.latent_dim;
      report.total_residual_sq += entry.residual_sq;
      report.entries.push_back(std::move(entry));

      for (std::size_t i = lo; i < hi; ++i) {
        switch (op) {
          case Op::kUp:
            latent_experts[i].a_up = as[i - lo];
            groups[g].b_up = b;
            break;
          case Op::kGate:
            latent_experts[i].a_gate = as[i - lo];
            groups[g].b_gate = b;
            break;
          case Op::kDown:
            latent_experts[i].a_down = transpose(as[i - lo]);
            groups[g].b_down = transpose(b);
            break;
        }
      }
    }
  }

  MolaeConfig cfg;
  cfg.hidden_dim = n;
  cfg.intermediate_dim = m;
  cfg.num_experts = N;
  cfg.top_k = sc.top_k;
  cfg.group_size = opts.group_size;
  cfg.op_mask = opts.op_mask;
  cfg.activation = sc.activation;

  MolaeLayer dst(cfg, std::move(groups), std::move(latent_experts), std::move(dense_experts),
                 RouterWeights{src.router().w_router});
  report.forward_deviation =
      verify_equivalence(AnyLayer{src}, AnyLayer{dst}, opts.report_probes, opts.report_seed);
  return {std::move(dst), std::move(report)};
}

/// Router-driven calibration collector: sends seeded standard-normal probes
/// through the source layer and appends each probe to the activation slice of
/// every expert it was routed to.
inline ActivationBatch collect_activation_batch(const MoeLayer& layer, std::size_t samples,
                                                std::uint64_t seed) {
  const std::size_t n = layer.config().hidden_dim;
  std::vector<std::vector<Vec>> cols(layer.config().num_experts);
  Rng rng(seed);
  for (std::size_t s = 0; s < samples; ++s) {
    const Vec x = rng.gaussian_vec(n);
    const RouteDecision d = route(layer, x);
    for (std::size_t id : d.indices) cols[id - 1].push_back(x);
  }
  ActivationBatch batch;
  batch.per_expert.resize(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i].empty()) continue;
    Matrix xi(n, cols[i].size());
    for (std::size_t c = 0; c < cols[i].size(); ++c)
      for (std::size_t r = 0; r < n; ++r) xi(r, c) = cols[i][c][r];
    batch.per_expert[i] = std::move(xi);
  }
  return batch;
}

}  // namespace molae

#endif  // MOLAE_TRANSFORM_HPP
