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
#ifndef MOLAE_ROUTER_HPP
#define MOLAE_ROUTER_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "molae/error.hpp"
#include "molae/matrix.hpp"

namespace molae {

/// Linear logit projection; row i holds the logit weights of expert i.
struct RouterWeights {
  Matrix w_router;  // N x n
  std::size_t num_experts() const { return w_router.rows(); }
};

/// Top-k routing outcome. Expert ids are 1-based (experts are E_1 .. E_N
/// throughout the library); gates are the selected softmax probabilities
/// renormalized to sum to one, ordered by decreasing gate.
struct RouteDecision {
  std::vector<std::size_t> indices;
  Vec gates;
};

/// Numerically stable softmax.
inline Vec softmax(const Vec& logits) {
  if (logits.empty()) throw ArgumentError("softmax: empty input");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

/// Softmax over router logits, then top-k selection with deterministic
/// tie-break (lower expert index wins) and renormalization of the selected
/// gates. Also exposes the full softmax, which backward passes and load
/// balancing both need.
inline RouteDecision route_top_k(const RouterWeights& router, const Vec& x, std::size_t top_k,
                                 Vec* full_softmax = nullptr) {
  const std::size_t n_experts = router.num_experts();
  if (top_k == 0 || top_k > n_experts) {
    throw ArgumentError("route: top_k " + std::to_string(top_k) + " outside [1, " +
                        std::to_string(n_experts) + "]");
  }
  const Vec probs = softmax(router.w_router * x);
  if (full_softmax != nullptr) *full_softmax = probs;

  std::vector<std::size_t> order(n_experts);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&probs](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });

  RouteDecision d;
  d.indices.resize(top_k);
  d.gates.resize(top_k);
  double sum = 0.0;
  for (std::size_t k = 0; k < top_k; ++k) sum += probs[order[k]];
  for (std::size_t k = 0; k < top_k; ++k) {
    d.indices[k] = order[k] + 1;  // 1-based expert id
    d.gates[k] = probs[order[k]] / sum;
  }
  return d;
}

struct RouterBackward {
  Matrix d_router;  // N x n
  Vec dx;           // length n
};

/// Backpropagates per-gate objective gradients through the renormalized
/// top-k softmax onto the router weights and the input. The selection set is
/// fixed (straight-through); only the gate values are differentiable.
inline RouterBackward route_backward(const RouterWeights& router, const Vec& x, const Vec& probs,
                                     const RouteDecision& d, const Vec& gate_grads) {
  double sel_sum = 0.0;
  for (std::size_t id : d.indices) sel_sum += probs[id - 1];
  Vec dp(probs.size(), 0.0);
  for (std::size_t k = 0; k < d.indices.size(); ++k) {
    for (std::size_t l = 0; l < d.indices.size(); ++l) {
      const double delta = (k == l) ? 1.0 : 0.0;
      dp[d.indices[l] - 1] += gate_grads[k] * (delta - d.gates[k]) / sel_sum;
    }
  }
  // Softmax backward: dz_j = p_j (dp_j - sum_l p_l dp_l).
  double inner = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) inner += probs[j] * dp[j];
  Vec dz(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j) dz[j] = probs[j] * (dp[j] - inner);

  RouterBackward out;
  out.d_router = Matrix(router.w_router.rows(), router.w_router.cols());
  add_outer(out.d_router, 1.0, dz, x);
  out.dx = transpose_matvec(router.w_router, dz);
  return out;
}

/// Per-expert routing statistics aggregated over a batch: the fraction of
/// selections each expert received and its mean softmax probability mass.
struct RouteStats {
  std::vector<double> selection_freq;
  std::vector<double> mean_gate_mass;
  std::size_t batch = 0;
};

inline void accumulate_route_stats(RouteStats& stats, const RouteDecision& d, const Vec& probs) {
  if (stats.selection_freq.empty()) {
    stats.selection_freq.assign(probs.size(), 0.0);
    stats.mean_gate_mass.assign(probs.size(), 0.0);
  }
  for (std::size_t id : d.indices) stats.selection_freq[id - 1] += 1.0;
  for (std::size_t i = 0; i < probs.size(); ++i) stats.mean_gate_mass[i] += probs[i];
  ++stats.batch;
}

inline RouteStats finalize_route_stats(RouteStats stats, std::size_t top_k) {
  if (stats.batch == 0) throw ArgumentError("route stats: empty batch");
  const double denom_sel = static_cast<double>(stats.batch * top_k);
  for (double& f : stats.selection_freq) f /= denom_sel;
  for (double& p : stats.mean_gate_mass) p /= static_cast<double>(stats.batch);
  return stats;
}

}  // namespace molae

#endif  // MOLAE_ROUTER_HPP
