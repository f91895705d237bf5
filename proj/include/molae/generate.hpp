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
#ifndef MOLAE_GENERATE_HPP
#define MOLAE_GENERATE_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "molae/error.hpp"
#include "molae/latent.hpp"
#include "molae/moe.hpp"
#include "molae/ops.hpp"
#include "molae/rng.hpp"

namespace molae {

enum class GenKind : std::uint8_t {
  kMoe = 0,
  kMolae = 1,
  /// Dense mixture layer whose expert operators are materialized from hidden
  /// per-group shared projections and per-expert latent maps, so a shared
  /// rank-m factorization exists exactly.
  kPlanted = 2,
};

inline GenKind parse_gen_kind(const std::string& s) {
  if (s == "moe") return GenKind::kMoe;
  if (s == "molae") return GenKind::kMolae;
  if (s == "planted") return GenKind::kPlanted;
  throw ArgumentError("unknown model kind '" + s + "' (expected moe|molae|planted)");
}

struct GenConfig {
  std::size_t hidden_dim = 512;        // defaults follow the toy fixture
  std::size_t intermediate_dim = 256;
  std::size_t num_experts = 32;
  std::size_t top_k = 2;
  std::size_t group_size = 8;  // used by molae and planted kinds
  OpMask op_mask = OpMask::all();
  Activation activation = Activation::kSilu;
};

/// Deterministic synthetic layer. Weight entries are i.i.d. normal with
/// fan-in scaling (stddev 1/sqrt(input dim of the operator)); a fixed seed
/// gives bit-identical layers.
inline AnyLayer generate(GenKind kind, const GenConfig& cfg, std::uint64_t seed) {
  const std::size_t n = cfg.hidden_dim;
  const std::size_t m = cfg.intermediate_dim;
  const std::size_t N = cfg.num_experts;
  if (n == 0 || m == 0 || N == 0 || cfg.top_k == 0)
    throw ArgumentError("generate: dimensions and top_k must be positive");
  Rng rng(seed);
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(n));
  const double latent_scale = 1.0 / std::sqrt(static_cast<double>(m));

  if (kind == GenKind::kMoe) {
    std::vector<ExpertWeights> experts;
    experts.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
      ExpertWeights e;
      e.w_up = rng.gaussian_matrix(m, n, in_scale);
      e.w_gate = rng.gaussian_matrix(m, n, in_scale);
      e.w_down = rng.gaussian_matrix(n, m, latent_scale);
      experts.push_back(std::move(e));
    }
    RouterWeights router{rng.gaussian_matrix(N, n, in_scale)};
    return AnyLayer{MoeLayer(MoeConfig{n, m, N, cfg.top_k, cfg.activation}, std::move(experts),
                             std::move(router))};
  }

  if (kind == GenKind::kPlanted) {
    const std::size_t groups_n = group_count(N, cfg.group_size);
    std::vector<LatentGroup> hidden_groups(groups_n);
    for (LatentGroup& g : hidden_groups) {
      g.b_up = rng.gaussian_matrix(m, n, in_scale);
      g.b_gate = rng.gaussian_matrix(m, n, in_scale);
      g.b_down = rng.gaussian_matrix(n, m, latent_scale);
    }
    std::vector<ExpertWeights> experts;
    experts.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
      const LatentGroup& g = hidden_groups[group_index(i + 1, cfg.group_size) - 1];
      const Matrix a_up = rng.gaussian_matrix(m, m, latent_scale);
      const Matrix a_gate = rng.gaussian_matrix(m, m, latent_scale);
      const Matrix a_down = rng.gaussian_matrix(m, m, latent_scale);
      ExpertWeights e;
      e.w_up = a_up * *g.b_up;
      e.w_gate = a_gate * *g.b_gate;
      e.w_down = *g.b_down * a_down;
      experts.push_back(std::move(e));
    }
    RouterWeights router{rng.gaussian_matrix(N, n, in_scale)};
    return AnyLayer{MoeLayer(MoeConfig{n, m, N, cfg.top_k, cfg.activation}, std::move(experts),
                             std::move(router))};
  }

  // kMolae
  const std::size_t groups_n = group_count(N, cfg.group_size);
  std::vector<LatentGroup> groups(groups_n);
  for (LatentGroup& g : groups) {
    if (cfg.op_mask.up) g.b_up = rng.gaussian_matrix(m, n, in_scale);
    if (cfg.op_mask.gate) g.b_gate = rng.gaussian_matrix(m, n, in_scale);
    if (cfg.op_mask.down) g.b_down = rng.gaussian_matrix(n, m, latent_scale);
  }
  std::vector<LatentExpert> latents(N);
  std::vector<DenseOperators> denses(N);
  for (std::size_t i = 0; i < N; ++i) {
    if (cfg.op_mask.up) latents[i].a_up = rng.gaussian_matrix(m, m, latent_scale);
    else denses[i].w_up = rng.gaussian_matrix(m, n, in_scale);
    if (cfg.op_mask.gate) latents[i].a_gate = rng.gaussian_matrix(m, m, latent_scale);
    else denses[i].w_gate = rng.gaussian_matrix(m, n, in_scale);
    if (cfg.op_mask.down) latents[i].a_down = rng.gaussian_matrix(m, m, latent_scale);
    else denses[i].w_down = rng.gaussian_matrix(n, m, latent_scale);
  }
  RouterWeights router{rng.gaussian_matrix(N, n, in_scale)};
  MolaeConfig mc{n, m, N, cfg.top_k, cfg.group_size, cfg.op_mask, cfg.activation};
  return AnyLayer{MolaeLayer(mc, std::move(groups), std::move(latents), std::move(denses),
                             std::move(router))};
}

}  // namespace molae

#endif  // MOLAE_GENERATE_HPP
