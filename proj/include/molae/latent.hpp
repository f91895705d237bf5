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
#ifndef MOLAE_LATENT_HPP
#define MOLAE_LATENT_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "molae/activation.hpp"
#include "molae/error.hpp"
#include "molae/matrix.hpp"
#include "molae/moe.hpp"
#include "molae/ops.hpp"
#include "molae/router.hpp"

namespace molae {

/// 1-based contiguous grouping: experts 1..k map to group 1, k+1..2k to
/// group 2, and so on. The last group is smaller when k does not divide N.
inline std::size_t group_index(std::size_t expert_id, std::size_t group_size) {
  if (expert_id == 0) throw ArgumentError("group_index: expert ids are 1-based");
  if (group_size == 0) throw ArgumentError("group_index: group size must be positive");
  return (expert_id - 1) / group_size + 1;
}

inline std::size_t group_count(std::size_t num_experts, std::size_t group_size) {
  return (num_experts + group_size - 1) / group_size;
}

/// Expert-specific latent maps (m x m), present exactly for the operators in
/// the layer's op mask.
struct LatentExpert {
  std::optional<Matrix> a_up;
  std::optional<Matrix> a_gate;
  std::optional<Matrix> a_down;
};

/// Group-shared projections: b_up and b_gate are m x n, b_down is n x m
/// (the down factorization takes the reverse form w_down = b_down a_down).
struct LatentGroup {
  std::optional<Matrix> b_up;
  std::optional<Matrix> b_gate;
  std::optional<Matrix> b_down;
};

/// Dense per-expert matrices for the operators outside the op mask.
struct DenseOperators {
  std::optional<Matrix> w_up;
  std::optional<Matrix> w_gate;
  std::optional<Matrix> w_down;
};

struct MolaeConfig {
  std::size_t hidden_dim = 0;        // n
  std::size_t intermediate_dim = 0;  // m, also the latent dimension
  std::size_t num_experts = 0;       // N
  std::size_t top_k = 0;
  std::size_t group_size = 0;  // k experts share each set of projections
  OpMask op_mask = OpMask::all();
  Activation activation = Activation::kSilu;
};

/// Mixture-of-latent-experts layer: each masked operator factors into an
/// expert-specific m x m latent map composed with a group-shared projection;
/// unmasked operators keep their dense per-expert matrices (hybrid mode).
class MolaeLayer {
 public:
  MolaeLayer(MolaeConfig config, std::vector<LatentGroup> groups,
             std::vector<LatentExpert> latent_experts, std::vector<DenseOperators> dense_experts,
             RouterWeights router)
      : config_(config),
        groups_(std::move(groups)),
        latent_experts_(std::move(latent_experts)),
        dense_experts_(std::move(dense_experts)),
        router_(std::move(router)) {
    validate();
  }

  const MolaeConfig& config() const { return config_; }
  const std::vector<LatentGroup>& groups() const { return groups_; }
  const std::vector<LatentExpert>& latent_experts() const { return latent_experts_; }
  const std::vector<DenseOperators>& dense_experts() const { return dense_experts_; }
  const RouterWeights& router() const { return router_; }

  std::size_t num_groups() const { return groups_.size(); }

  /// 1-based group id of a 1-based expert id.
  std::size_t group_of(std::size_t expert_id) const {
    check_expert_id(expert_id);
    return group_index(expert_id, config_.group_size);
  }

  const LatentGroup& group(std::size_t group_id) const {
    if (group_id == 0 || group_id > groups_.size())
      throw ArgumentError("group id " + std::to_string(group_id) + " outside [1, " +
                          std::to_string(groups_.size()) + "]");
    return groups_[group_id - 1];
  }

  const LatentExpert& latent_expert(std::size_t expert_id) const {
    check_expert_id(expert_id);
    return latent_experts_[expert_id - 1];
  }

  const DenseOperators& dense_expert(std::size_t expert_id) const {
    check_expert_id(expert_id);
    return dense_experts_[expert_id - 1];
  }

 private:
  void check_expert_id(std::size_t expert_id) const {
    if (expert_id == 0 || expert_id > config_.num_experts)
      throw ArgumentError("expert id " + std::to_string(expert_id) + " outside [1, " +
                          std::to_string(config_.num_experts) + "]");
  }

  void validate() const {
    const std::size_t n = config_.hidden_dim;
    const std::size_t m = config_.intermediate_dim;
    const std::size_t N = config_.num_experts;
    const std::size_t k = config_.group_size;
    if (n == 0 || m == 0 || N == 0) throw ArgumentError("molae layer: dimensions must be positive");
    if (config_.top_k == 0 || config_.top_k > N)
      throw ArgumentError("molae layer: top_k outside [1, N]");
    if (k == 0 || k > N) throw ArgumentError("molae layer: group size outside [1, N]");
    if (groups_.size() != group_count(N, k))
      throw ArgumentError("molae layer: expected " + std::to_string(group_count(N, k)) +
                          " groups, got " + std::to_string(groups_.size()));
    if (latent_experts_.size() != N || dense_experts_.size() != N)
      throw ArgumentError("molae layer: per-expert table size mismatch");

    const OpMask& mask = config_.op_mask;
    auto check_presence = [](bool latent, bool has_latent_a, bool has_latent_b, bool has_dense,
                             const std::string& what) {
      if (latent && (!has_latent_a || !has_latent_b || has_dense))
        throw ArgumentError("molae layer: masked operator '" + what +
                            "' must be latent (a+b present, dense absent)");
      if (!latent && (has_latent_a || has_latent_b || !has_dense))
        throw ArgumentError("molae layer: unmasked operator '" + what +
                            "' must be dense (a+b absent, dense present)");
    };
    auto check_shape = [](const std::optional<Matrix>& mt, std::size_t r, std::size_t c,
                          const std::string& what) {
      if (mt && (mt->rows() != r || mt->cols() != c))
        throw ArgumentError("molae layer: " + what + " must be " + std::to_string(r) + "x" +
                            std::to_string(c) + ", got " + mt->shape_str());
    };

    for (std::size_t i = 0; i < N; ++i) {
      const LatentExpert& le = latent_experts_[i];
      const DenseOperators& de = dense_experts_[i];
      const LatentGroup& lg = groups_[group_index(i + 1, k) - 1];
      check_presence(mask.up, le.a_up.has_value(), lg.b_up.has_value(), de.w_up.has_value(), "up");
      check_presence(mask.gate, le.a_gate.has_value(), lg.b_gate.has_value(),
                     de.w_gate.has_value(), "gate");
      check_presence(mask.down, le.a_down.has_value(), lg.b_down.has_value(),
                     de.w_down.has_value(), "down");
      check_shape(le.a_up, m, m, "a_up");
      check_shape(le.a_gate, m, m, "a_gate");
      check_shape(le.a_down, m, m, "a_down");
      check_shape(de.w_up, m, n, "dense w_up");
      check_shape(de.w_gate, m, n, "dense w_gate");
      check_shape(de.w_down, n, m, "dense w_down");
    }
    for (const LatentGroup& lg : groups_) {
      check_shape(lg.b_up, m, n, "b_up");
      check_shape(lg.b_gate, m, n, "b_gate");
      check_shape(lg.b_down, n, m, "b_down");
    }
    if (router_.w_router.rows() != N || router_.w_router.cols() != n)
      throw ArgumentError("molae layer: router shape must be N x n");
  }

  MolaeConfig config_;
  std::vector<LatentGroup> groups_;
  std::vector<LatentExpert> latent_experts_;
  std::vector<DenseOperators> dense_experts_;
  RouterWeights router_;
};

/// Intermediates of one latent expert evaluation (empty vectors for slots a
/// dense operator does not use).
struct LatentExpertTrace {
  Vec proj_up;    // b_up x
  Vec z_up;       // a_up proj_up, or dense w_up x
  Vec proj_gate;  // b_gate x
  Vec z_gate;     // a_gate proj_gate, or dense w_gate x
  Vec hidden;     // z_up had act(z_gate)
  Vec latent_down;  // a_down hidden
  Vec out;
};

namespace detail {

inline LatentExpertTrace latent_expert_eval(const MolaeLayer& layer, std::size_t expert_id,
                                            const Vec& x) {
  const MolaeConfig& cfg = layer.config();
  if (x.size() != cfg.hidden_dim)
    throw ArgumentError("latent expert forward: input length mismatch");
  const LatentExpert& le = layer.latent_expert(expert_id);
  const DenseOperators& de = layer.dense_expert(expert_id);
  const LatentGroup& lg = layer.group(layer.group_of(expert_id));

  LatentExpertTrace t;
  if (cfg.op_mask.up) {
    t.proj_up = *lg.b_up * x;
    t.z_up = *le.a_up * t.proj_up;
  } else {
    t.z_up = *de.w_up * x;
  }
  if (cfg.op_mask.gate) {
    t.proj_gate = *lg.b_gate * x;
    t.z_gate = *le.a_gate * t.proj_gate;
  } else {
    t.z_gate = *de.w_gate * x;
  }
  t.hidden.resize(t.z_up.size());
  for (std::size_t i = 0; i < t.hidden.size(); ++i)
    t.hidden[i] = t.z_up[i] * activate(cfg.activation, t.z_gate[i]);
  if (cfg.op_mask.down) {
    t.latent_down = *le.a_down * t.hidden;
    t.out = *lg.b_down * t.latent_down;
  } else {
    t.out = *de.w_down * t.hidden;
  }
  return t;
}

}  // namespace detail

/// Single latent-expert evaluation (1-based expert id).
inline Vec latent_expert_forward(const MolaeLayer& layer, std::size_t expert_id, const Vec& x) {
  return detail::latent_expert_eval(layer, expert_id, x).out;
}

struct MolaeForwardCache {
  bool valid = false;
  Vec x;
  Vec probs;
  RouteDecision decision;
  std::vector<LatentExpertTrace> traces;  // parallel to decision.indices
};

inline Vec molae_ffn_forward(const MolaeLayer& layer, const Vec& x,
                             MolaeForwardCache* cache = nullptr) {
  if (x.size() != layer.config().hidden_dim)
    throw ArgumentError("molae_ffn_forward: input length mismatch");
  Vec probs;
  const RouteDecision d = route_top_k(layer.router(), x, layer.config().top_k, &probs);
  Vec y = x;
  if (cache != nullptr) {
    *cache = MolaeForwardCache{};
    cache->x = x;
    cache->probs = probs;
    cache->decision = d;
  }
  for (std::size_t k = 0; k < d.indices.size(); ++k) {
    LatentExpertTrace t = detail::latent_expert_eval(layer, d.indices[k], x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += d.gates[k] * t.out[i];
    if (cache != nullptr) cache->traces.push_back(std::move(t));
  }
  if (cache != nullptr) cache->valid = true;
  return y;
}

inline RouteDecision molae_route(const MolaeLayer& layer, const Vec& x) {
  return route_top_k(layer.router(), x, layer.config().top_k);
}

inline Matrix molae_ffn_forward_batch(const MolaeLayer& layer, const Matrix& xs) {
  Matrix ys(xs.rows(), xs.cols());
  for (std::size_t r = 0; r < xs.rows(); ++r) ys.set_row(r, molae_ffn_forward(layer, xs.row(r)));
  return ys;
}

struct LatentExpertGrads {
  std::optional<Matrix> a_up;
  std::optional<Matrix> a_gate;
  std::optional<Matrix> a_down;
};

struct LatentGroupGrads {
  std::optional<Matrix> b_up;
  std::optional<Matrix> b_gate;
  std::optional<Matrix> b_down;
};

struct MolaeGradients {
  Vec x;
  std::vector<LatentExpertGrads> latent_experts;
  std::vector<LatentGroupGrads> groups;  // accumulate over all experts in each group
  std::vector<DenseOperators> dense_experts;  // gradient matrices for dense ops
  Matrix router;
};

/// Gradients of <dy, molae_ffn_forward(x)>. Group projections accumulate
/// contributions from every selected expert of the group.
inline MolaeGradients molae_ffn_backward(const MolaeLayer& layer, const MolaeForwardCache& cache,
                                         const Vec& dy) {
  if (!cache.valid) throw StateError("molae_ffn_backward: forward cache not populated");
  const MolaeConfig& cfg = layer.config();
  if (dy.size() != cfg.hidden_dim) throw ArgumentError("molae_ffn_backward: dy length mismatch");
  const std::size_t n = cfg.hidden_dim;
  const std::size_t m = cfg.intermediate_dim;

  MolaeGradients g;
  g.x = dy;
  g.latent_experts.resize(cfg.num_experts);
  g.groups.resize(layer.num_groups());
  g.dense_experts.resize(cfg.num_experts);
  for (std::size_t i = 0; i < cfg.num_experts; ++i) {
    if (cfg.op_mask.up) g.latent_experts[i].a_up = Matrix(m, m);
    else g.dense_experts[i].w_up = Matrix(m, n);
    if (cfg.op_mask.gate) g.latent_experts[i].a_gate = Matrix(m, m);
    else g.dense_experts[i].w_gate = Matrix(m, n);
    if (cfg.op_mask.down) g.latent_experts[i].a_down = Matrix(m, m);
    else g.dense_experts[i].w_down = Matrix(n, m);
  }
  for (std::size_t gi = 0; gi < layer.num_groups(); ++gi) {
    if (cfg.op_mask.up) g.groups[gi].b_up = Matrix(m, n);
    if (cfg.op_mask.gate) g.groups[gi].b_gate = Matrix(m, n);
    if (cfg.op_mask.down) g.groups[gi].b_down = Matrix(n, m);
  }
  g.router = Matrix(cfg.num_experts, n);

  const RouteDecision& d = cache.decision;
  Vec gate_grads(d.indices.size(), 0.0);

  for (std::size_t k = 0; k < d.indices.size(); ++k) {
    const std::size_t expert_id = d.indices[k];
    const std::size_t ei = expert_id - 1;
    const std::size_t gi = layer.group_of(expert_id) - 1;
    const LatentExpert& le = layer.latent_expert(expert_id);
    const DenseOperators& de = layer.dense_expert(expert_id);
    const LatentGroup& lg = layer.group(gi + 1);
    const LatentExpertTrace& t = cache.traces[k];
    const double gate = d.gates[k];

    gate_grads[k] = dot(dy, t.out);

    // Down operator.
    Vec dh;
    if (cfg.op_mask.down) {
      Vec scaled_dy = dy;
      for (double& v : scaled_dy) v *= gate;
      const Vec dq = transpose_matvec(*lg.b_down, scaled_dy);
      add_outer(*g.groups[gi].b_down, 1.0, scaled_dy, t.latent_down);
      add_outer(*g.latent_experts[ei].a_down, 1.0, dq, t.hidden);
      dh = transpose_matvec(*le.a_down, dq);
    } else {
      dh = transpose_matvec(*de.w_down, dy);
      for (double& v : dh) v *= gate;
      add_outer(*g.dense_experts[ei].w_down, gate, dy, t.hidden);
    }

    // Hadamard gate.
    Vec du(dh.size()), dgp(dh.size());
    for (std::size_t i = 0; i < dh.size(); ++i) {
      const double a = activate(cfg.activation, t.z_gate[i]);
      const double ag = activate_grad(cfg.activation, t.z_gate[i]);
      du[i] = dh[i] * a;
      dgp[i] = dh[i] * t.z_up[i] * ag;
    }

    // Up operator.
    if (cfg.op_mask.up) {
      add_outer(*g.latent_experts[ei].a_up, 1.0, du, t.proj_up);
      const Vec dproj = transpose_matvec(*le.a_up, du);
      add_outer(*g.groups[gi].b_up, 1.0, dproj, cache.x);
      const Vec dx = transpose_matvec(*lg.b_up, dproj);
      for (std::size_t i = 0; i < g.x.size(); ++i) g.x[i] += dx[i];
    } else {
      add_outer(*g.dense_experts[ei].w_up, 1.0, du, cache.x);
      const Vec dx = transpose_matvec(*de.w_up, du);
      for (std::size_t i = 0; i < g.x.size(); ++i) g.x[i] += dx[i];
    }

    // Gate operator.
    if (cfg.op_mask.gate) {
      add_outer(*g.latent_experts[ei].a_gate, 1.0, dgp, t.proj_gate);
      const Vec dproj = transpose_matvec(*le.a_gate, dgp);
      add_outer(*g.groups[gi].b_gate, 1.0, dproj, cache.x);
      const Vec dx = transpose_matvec(*lg.b_gate, dproj);
      for (std::size_t i = 0; i < g.x.size(); ++i) g.x[i] += dx[i];
    } else {
      add_outer(*g.dense_experts[ei].w_gate, 1.0, dgp, cache.x);
      const Vec dx = transpose_matvec(*de.w_gate, dgp);
      for (std::size_t i = 0; i < g.x.size(); ++i) g.x[i] += dx[i];
    }
  }

  const RouterBackward rb =
      route_backward(layer.router(), cache.x, cache.probs, d, gate_grads);
  g.router = rb.d_router;
  for (std::size_t i = 0; i < g.x.size(); ++i) g.x[i] += rb.dx[i];

  return g;
}

/// Materializes the composite operator of one expert: a_up b_up (m x n) for
/// up/gate, b_down a_down (n x m) for down. The operator must be latent.
inline Matrix composite_operator(const MolaeLayer& layer, std::size_t expert_id, Op which) {
  const MolaeConfig& cfg = layer.config();
  if (!cfg.op_mask.contains(which))
    throw ArgumentError(std::string("composite_operator: '") + op_name(which) +
                        "' is not a latent operator in this layer");
  const LatentExpert& le = layer.latent_expert(expert_id);
  const LatentGroup& lg = layer.group(layer.group_of(expert_id));
  switch (which) {
    case Op::kUp: return *le.a_up * *lg.b_up;
    case Op::kGate: return *le.a_gate * *lg.b_gate;
    case Op::kDown: return *lg.b_down * *le.a_down;
  }
  throw ArgumentError("composite_operator: unknown operator");
}

/// Either layer kind, as stored in a model container.
using AnyLayer = std::variant<MoeLayer, MolaeLayer>;

inline Vec any_forward(const AnyLayer& layer, const Vec& x) {
  if (std::holds_alternative<MoeLayer>(layer)) return ffn_forward(std::get<MoeLayer>(layer), x);
  return molae_ffn_forward(std::get<MolaeLayer>(layer), x);
}

inline RouteDecision any_route(const AnyLayer& layer, const Vec& x) {
  if (std::holds_alternative<MoeLayer>(layer)) return route(std::get<MoeLayer>(layer), x);
  return molae_route(std::get<MolaeLayer>(layer), x);
}

inline std::size_t any_hidden_dim(const AnyLayer& layer) {
  if (std::holds_alternative<MoeLayer>(layer)) return std::get<MoeLayer>(layer).config().hidden_dim;
  return std::get<MolaeLayer>(layer).config().hidden_dim;
}

inline std::size_t any_num_experts(const AnyLayer& layer) {
  if (std::holds_alternative<MoeLayer>(layer))
    return std::get<MoeLayer>(layer).config().num_experts;
  return std::get<MolaeLayer>(layer).config().num_experts;
}

inline std::size_t any_top_k(const AnyLayer& layer) {
  if (std::holds_alternative<MoeLayer>(layer)) return std::get<MoeLayer>(layer).config().top_k;
  return std::get<MolaeLayer>(layer).config().top_k;
}

}  // namespace molae

#endif  // MOLAE_LATENT_HPP
