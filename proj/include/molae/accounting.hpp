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
#ifndef MOLAE_ACCOUNTING_HPP
#define MOLAE_ACCOUNTING_HPP

#include <cstddef>
#include <cstdint>

#include "molae/error.hpp"
#include "molae/latent.hpp"
#include "molae/moe.hpp"
#include "molae/ops.hpp"

namespace molae {

/// Architecture parameters entering the closed-form cost model.
struct ArchSpec {
  std::size_t hidden_dim = 0;        // n
  std::size_t intermediate_dim = 0;  // m
  std::size_t num_experts = 0;       // N
  std::size_t group_size = 1;        // k
  OpMask op_mask = OpMask::all();

  void validate() const {
    if (hidden_dim == 0 || intermediate_dim == 0 || num_experts == 0 || group_size == 0)
      throw ArgumentError("arch spec: dimensions must be positive");
    if (group_size > num_experts)
      throw ArgumentError("arch spec: group size exceeds expert count");
  }
};

/// FFN weights of the standard mixture layer: 3 N m n (router excluded).
inline std::uint64_t moe_param_count(const ArchSpec& spec) {
  spec.validate();
  const std::uint64_t n = spec.hidden_dim, m = spec.intermediate_dim, N = spec.num_experts;
  return 3 * N * m * n;
}

/// FFN weights of the latent-expert layer. Each latent operator costs
/// N m^2 + floor(N/k) m n; each dense operator costs N m n. The full mask
/// gives the closed form 3 N m^2 + 3 floor(N/k) m n. Note the literal
/// floor(N/k): when k does not divide N the built layer actually carries
/// ceil(N/k) projection sets, which census() reports.
inline std::uint64_t molae_param_count(const ArchSpec& spec) {
  spec.validate();
  const std::uint64_t n = spec.hidden_dim, m = spec.intermediate_dim, N = spec.num_experts;
  const std::uint64_t groups_floor = N / spec.group_size;
  const std::uint64_t latent_ops = static_cast<std::uint64_t>(spec.op_mask.count());
  const std::uint64_t dense_ops = 3 - latent_ops;
  return latent_ops * (N * m * m + groups_floor * m * n) + dense_ops * (N * m * n);
}

/// Forward FLOPs of the standard mixture layer over all N experts:
/// (3 m n + 2 m) N, counting one multiply-accumulate as one FLOP and 2m for
/// the Hadamard product and activation.
inline std::uint64_t moe_flops(const ArchSpec& spec) {
  spec.validate();
  const std::uint64_t n = spec.hidden_dim, m = spec.intermediate_dim, N = spec.num_experts;
  return (3 * m * n + 2 * m) * N;
}

/// Forward FLOPs of the latent-expert layer over all N experts:
/// (3 m^2 + 2 m) N + 3 floor(N/k) m n with the full mask. Shared projections
/// are counted once per group (the up/gate projections are input-only and the
/// down projection distributes over the group's sum). Dense operators cost
/// N m n apiece.
inline std::uint64_t molae_flops(const ArchSpec& spec) {
  spec.validate();
  const std::uint64_t n = spec.hidden_dim, m = spec.intermediate_dim, N = spec.num_experts;
  const std::uint64_t groups_floor = N / spec.group_size;
  const std::uint64_t latent_ops = static_cast<std::uint64_t>(spec.op_mask.count());
  const std::uint64_t dense_ops = 3 - latent_ops;
  return latent_ops * (N * m * m + groups_floor * m * n) + dense_ops * (N * m * n) + 2 * m * N;
}

/// Active-expert FLOP variant (an extension of the all-expert convention
/// above): only top_k experts run, and at most min(top_k, ceil(N/k)) distinct
/// projection sets are touched (upper bound; the true count is input
/// dependent).
inline std::uint64_t moe_flops_active(const ArchSpec& spec, std::size_t top_k) {
  spec.validate();
  if (top_k == 0 || top_k > spec.num_experts)
    throw ArgumentError("active flops: top_k outside [1, N]");
  const std::uint64_t n = spec.hidden_dim, m = spec.intermediate_dim;
  return (3 * m * n + 2 * m) * top_k;
}

inline std::uint64_t molae_flops_active(const ArchSpec& spec, std::size_t top_k) {
  spec.validate();
  if (top_k == 0 || top_k > spec.num_experts)
    throw ArgumentError("active flops: top_k outside [1, N]");
  const std::uint64_t n = spec.hidden_dim, m = spec.intermediate_dim;
  const std::uint64_t groups =
      std::min<std::uint64_t>(top_k, group_count(spec.num_experts, spec.group_size));
  const std::uint64_t latent_ops = static_cast<std::uint64_t>(spec.op_mask.count());
  const std::uint64_t dense_ops = 3 - latent_ops;
  return latent_ops * (top_k * m * m + groups * m * n) + dense_ops * (top_k * m * n) +
         2 * m * top_k;
}

/// Parameter-compression and FLOP-compression factors (standard / latent).
struct CostReport {
  std::uint64_t moe_params = 0;
  std::uint64_t molae_params = 0;
  std::uint64_t moe_flops = 0;
  std::uint64_t molae_flops = 0;
  double param_ratio = 0.0;
  double flop_ratio = 0.0;
};

inline CostReport cost_report(const ArchSpec& spec) {
  CostReport r;
  r.moe_params = moe_param_count(spec);
  r.molae_params = molae_param_count(spec);
  r.moe_flops = moe_flops(spec);
  r.molae_flops = molae_flops(spec);
  r.param_ratio = static_cast<double>(r.moe_params) / static_cast<double>(r.molae_params);
  r.flop_ratio = static_cast<double>(r.moe_flops) / static_cast<double>(r.molae_flops);
  return r;
}

/// Direct enumeration of stored FFN weights (router excluded).
inline std::uint64_t census(const MoeLayer& layer) {
  std::uint64_t total = 0;
  for (const ExpertWeights& e : layer.experts())
    total += e.w_up.size() + e.w_gate.size() + e.w_down.size();
  return total;
}

inline std::uint64_t census(const MolaeLayer& layer) {
  std::uint64_t total = 0;
  for (const LatentExpert& le : layer.latent_experts()) {
    if (le.a_up) total += le.a_up->size();
    if (le.a_gate) total += le.a_gate->size();
    if (le.a_down) total += le.a_down->size();
  }
  for (const DenseOperators& de : layer.dense_experts()) {
    if (de.w_up) total += de.w_up->size();
    if (de.w_gate) total += de.w_gate->size();
    if (de.w_down) total += de.w_down->size();
  }
  for (const LatentGroup& lg : layer.groups()) {
    if (lg.b_up) total += lg.b_up->size();
    if (lg.b_gate) total += lg.b_gate->size();
    if (lg.b_down) total += lg.b_down->size();
  }
  return total;
}

inline std::uint64_t census(const AnyLayer& layer) {
  if (std::holds_alternative<MoeLayer>(layer)) return census(std::get<MoeLayer>(layer));
  return census(std::get<MolaeLayer>(layer));
}

/// Router weights, reported separately from the FFN comparison.
inline std::uint64_t router_param_count(const AnyLayer& layer) {
  if (std::holds_alternative<MoeLayer>(layer))
    return std::get<MoeLayer>(layer).router().w_router.size();
  return std::get<MolaeLayer>(layer).router().w_router.size();
}

}  // namespace molae

#endif  // MOLAE_ACCOUNTING_HPP
