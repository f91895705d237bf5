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
#ifndef MOLAE_MOE_HPP
#define MOLAE_MOE_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "molae/activation.hpp"
#include "molae/error.hpp"
#include "molae/matrix.hpp"
#include "molae/router.hpp"

namespace molae {

/// One gated feed-forward expert: out = w_down ((w_up x) had act(w_gate x)).
struct ExpertWeights {
  Matrix w_up;    // m x n
  Matrix w_gate;  // m x n
  Matrix w_down;  // n x m
};

struct MoeConfig {
  std::size_t hidden_dim = 0;        // n
  std::size_t intermediate_dim = 0;  // m
  std::size_t num_experts = 0;       // N
  std::size_t top_k = 0;
  Activation activation = Activation::kSilu;
};

/// Standard mixture-of-experts feed-forward layer. Immutable after
/// construction; forward/backward are pure given a per-call cache, so
/// concurrent evaluation over batch rows is safe.
class MoeLayer {
 public:
  MoeLayer(MoeConfig config, std::vector<ExpertWeights> experts, RouterWeights router)
      : config_(config), experts_(std::move(experts)), router_(std::move(router)) {
    validate();
  }

  const MoeConfig& config() const { return config_; }
  const std::vector<ExpertWeights>& experts() const { return experts_; }
  const ExpertWeights& expert(std::size_t id_1based) const {
    if (id_1based == 0 || id_1based > experts_.size())
      throw ArgumentError("expert id " + std::to_string(id_1based) + " outside [1, " +
                          std::to_string(experts_.size()) + "]");
    return experts_[id_1based - 1];
  }
  const RouterWeights& router() const { return router_; }

 private:
  void validate() const {
    const std::size_t n = config_.hidden_dim;
    const std::size_t m = config_.intermediate_dim;
    if (n == 0 || m == 0) throw ArgumentError("moe layer: dimensions must be positive");
    if (config_.num_experts == 0 || experts_.size() != config_.num_experts)
      throw ArgumentError("moe layer: expert count mismatch");
    if (config_.top_k == 0 || config_.top_k > config_.num_experts)
      throw ArgumentError("moe layer: top_k outside [1, N]");
    for (const ExpertWeights& e : experts_) {
      if (e.w_up.rows() != m || e.w_up.cols() != n || e.w_gate.rows() != m ||
          e.w_gate.cols() != n || e.w_down.rows() != n || e.w_down.cols() != m)
        throw ArgumentError("moe layer: expert weight shapes inconsistent with (n=" +
                            std::to_string(n) + ", m=" + std::to_string(m) + ")");
    }
    if (router_.w_router.rows() != config_.num_experts || router_.w_router.cols() != n)
      throw ArgumentError("moe layer: router shape must be N x n");
  }

  MoeConfig config_;
  std::vector<ExpertWeights> experts_;
  RouterWeights router_;
};

/// Single-expert evaluation: project in with w_up and w_gate, gate with the
/// activation via the Hadamard product, project back out with w_down.
inline Vec expert_forward(const ExpertWeights& e, const Vec& x, Activation act) {
  if (e.w_up.cols() != x.size())
    throw ArgumentError("expert_forward: input length " + std::to_string(x.size()) +
                        " does not match weight shape " + e.w_up.shape_str());
  const Vec up = e.w_up * x;
  const Vec gate = e.w_gate * x;
  Vec h(up.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = up[i] * activate(act, gate[i]);
  return e.w_down * h;
}

inline RouteDecision route(const MoeLayer& layer, const Vec& x) {
  return route_top_k(layer.router(), x, layer.config().top_k);
}

/// Everything the backward pass needs from one forward evaluation.
struct MoeForwardCache {
  bool valid = false;
  Vec x;
  Vec probs;  // full softmax over all experts
  RouteDecision decision;
  // Parallel to decision.indices, one entry per selected expert.
  std::vector<Vec> up;          // w_up x
  std::vector<Vec> gate_pre;    // w_gate x
  std::vector<Vec> hidden;      // up had act(gate_pre)
  std::vector<Vec> expert_out;  // w_down hidden
};

inline Vec ffn_forward(const MoeLayer& layer, const Vec& x, MoeForwardCache* cache = nullptr) {
  if (x.size() != layer.config().hidden_dim)
    throw ArgumentError("ffn_forward: input length mismatch");
  Vec probs;
  const RouteDecision d = route_top_k(layer.router(), x, layer.config().top_k, &probs);
  Vec y = x;
  if (cache != nullptr) {
    *cache = MoeForwardCache{};
    cache->x = x;
    cache->probs = probs;
    cache->decision = d;
  }
  for (std::size_t k = 0; k < d.indices.size(); ++k) {
    const ExpertWeights& e = layer.expert(d.indices[k]);
    const Vec up = e.w_up * x;
    const Vec gate_pre = e.w_gate * x;
    Vec h(up.size());
    for (std::size_t i = 0; i < h.size(); ++i)
      h[i] = up[i] * activate(layer.config().activation, gate_pre[i]);
    const Vec out = e.w_down * h;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += d.gates[k] * out[i];
    if (cache != nullptr) {
      cache->up.push_back(up);
      cache->gate_pre.push_back(gate_pre);
      cache->hidden.push_back(h);
      cache->expert_out.push_back(out);
    }
  }
  if (cache != nullptr) cache->valid = true;
  return y;
}

/// Row-wise batch forward; bit-identical to forwarding each row separately.
inline Matrix ffn_forward_batch(const MoeLayer& layer, const Matrix& xs) {
  Matrix ys(xs.rows(), xs.cols());
  for (std::size_t r = 0; r < xs.rows(); ++r) ys.set_row(r, ffn_forward(layer, xs.row(r)));
  return ys;
}

struct ExpertGrads {
  Matrix up;    // dL/d w_up
  Matrix gate;  // dL/d w_gate
  Matrix down;  // dL/d w_down
};

struct MoeGradients {
  Vec x;                            // dL/dx
  std::vector<ExpertGrads> experts;  // zero for unselected experts
  Matrix router;                    // dL/d w_router
};

/// Gradients of <dy, ffn_forward(x)> with respect to the input and every
/// touched weight. Unselected experts receive exactly zero gradient.
inline MoeGradients ffn_backward(const MoeLayer& layer, const MoeForwardCache& cache,
                                 const Vec& dy) {
  if (!cache.valid) throw StateError("ffn_backward: forward cache not populated");
  const MoeConfig& cfg = layer.config();
  if (dy.size() != cfg.hidden_dim) throw ArgumentError("ffn_backward: dy length mismatch");

  MoeGradients g;
  g.x = dy;  // residual path
  g.experts.resize(cfg.num_experts);
  for (std::size_t i = 0; i < cfg.num_experts; ++i) {
    g.experts[i].up = Matrix(cfg.intermediate_dim, cfg.hidden_dim);
    g.experts[i].gate = Matrix(cfg.intermediate_dim, cfg.hidden_dim);
    g.experts[i].down = Matrix(cfg.hidden_dim, cfg.intermediate_dim);
  }
  g.router = Matrix(cfg.num_experts, cfg.hidden_dim);

  const RouteDecision& d = cache.decision;
  Vec gate_grads(d.indices.size(), 0.0);  // d objective / d gate_k

  for (std::size_t k = 0; k < d.indices.size(); ++k) {
    const std::size_t idx = d.indices[k] - 1;
    const ExpertWeights& e = layer.expert(d.indices[k]);
    ExpertGrads& eg = g.experts[idx];
    const double gate = d.gates[k];

    gate_grads[k] = dot(dy, cache.expert_out[k]);

    // Through w_down.
    Vec dh = transpose_matvec(e.w_down, dy);
    for (double& v : dh) v *= gate;
    add_outer(eg.down, gate, dy, cache.hidden[k]);

    // Through the Hadamard gate.
    Vec du(dh.size()), dgp(dh.size());
    for (std::size_t i = 0; i < dh.size(); ++i) {
      const double a = activate(cfg.activation, cache.gate_pre[k][i]);
      const double ag = activate_grad(cfg.activation, cache.gate_pre[k][i]);
      du[i] = dh[i] * a;
      dgp[i] = dh[i] * cache.up[k][i] * ag;
    }

    add_outer(eg.up, 1.0, du, cache.x);
    add_outer(eg.gate, 1.0, dgp, cache.x);

    const Vec dx_up = transpose_matvec(e.w_up, du);
    const Vec dx_gate = transpose_matvec(e.w_gate, dgp);
    for (std::size_t i = 0; i < g.x.size(); ++i) g.x[i] += dx_up[i] + dx_gate[i];
  }

  const RouterBackward rb =
      route_backward(layer.router(), cache.x, cache.probs, d, gate_grads);
  g.router = rb.d_router;
  for (std::size_t i = 0; i < g.x.size(); ++i) g.x[i] += rb.dx[i];

  return g;
}

/// Load-balance penalty N * sum_i freq_i * prob_i. Equals 1 under perfectly
/// uniform routing and N when all traffic collapses onto one expert.
inline double aux_load_balance_loss(const RouteStats& stats) {
  if (stats.batch == 0 || stats.selection_freq.empty())
    throw ArgumentError("aux_load_balance_loss: empty batch");
  const std::size_t n = stats.selection_freq.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += stats.selection_freq[i] * stats.mean_gate_mass[i];
  return static_cast<double>(n) * acc;
}

}  // namespace molae

#endif  // MOLAE_MOE_HPP
