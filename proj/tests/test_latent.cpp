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
#include <cmath>
#include <functional>
#include <set>

#include <gtest/gtest.h>

#include "molae/accounting.hpp"
#include "molae/generate.hpp"
#include "molae/latent.hpp"
#include "molae/moe.hpp"
#include "test_util.hpp"

using namespace molae;

namespace {

MolaeLayer random_molae(std::size_t n, std::size_t m, std::size_t N, std::size_t top_k,
                        std::size_t k, OpMask mask, std::uint64_t seed,
                        Activation act = Activation::kSilu) {
  GenConfig cfg;
  cfg.hidden_dim = n;
  cfg.intermediate_dim = m;
  cfg.num_experts = N;
  cfg.top_k = top_k;
  cfg.group_size = k;
  cfg.op_mask = mask;
  cfg.activation = act;
  return std::get<MolaeLayer>(generate(GenKind::kMolae, cfg, seed));
}

MoeLayer random_moe(std::size_t n, std::size_t m, std::size_t N, std::size_t top_k,
                    std::uint64_t seed, Activation act = Activation::kSilu) {
  GenConfig cfg;
  cfg.hidden_dim = n;
  cfg.intermediate_dim = m;
  cfg.num_experts = N;
  cfg.top_k = top_k;
  cfg.activation = act;
  return std::get<MoeLayer>(generate(GenKind::kMoe, cfg, seed));
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-6});
}

double central_diff(const std::function<double()>& eval, double& slot) {
  const double h = 1e-5;
  const double orig = slot;
  slot = orig + h;
  const double plus = eval();
  slot = orig - h;
  const double minus = eval();
  slot = orig;
  return (plus - minus) / (2.0 * h);
}

// Hybrid layer sharing the dense operators of a mixture layer for the
// unmasked slots; masked slots get fresh random latent factors.
MolaeLayer hybrid_from_moe(const MoeLayer& src, std::size_t k, OpMask mask, std::uint64_t seed) {
  const MoeConfig& c = src.config();
  Rng rng(seed);
  const std::size_t groups_n = group_count(c.num_experts, k);
  std::vector<LatentGroup> groups(groups_n);
  for (LatentGroup& g : groups) {
    if (mask.up) g.b_up = rng.gaussian_matrix(c.intermediate_dim, c.hidden_dim, 0.4);
    if (mask.gate) g.b_gate = rng.gaussian_matrix(c.intermediate_dim, c.hidden_dim, 0.4);
    if (mask.down) g.b_down = rng.gaussian_matrix(c.hidden_dim, c.intermediate_dim, 0.4);
  }
  std::vector<LatentExpert> latents(c.num_experts);
  std::vector<DenseOperators> denses(c.num_experts);
  for (std::size_t i = 0; i < c.num_experts; ++i) {
    if (mask.up) latents[i].a_up = rng.gaussian_matrix(c.intermediate_dim, c.intermediate_dim, 0.4);
    else denses[i].w_up = src.experts()[i].w_up;
    if (mask.gate)
      latents[i].a_gate = rng.gaussian_matrix(c.intermediate_dim, c.intermediate_dim, 0.4);
    else denses[i].w_gate = src.experts()[i].w_gate;
    if (mask.down)
      latents[i].a_down = rng.gaussian_matrix(c.intermediate_dim, c.intermediate_dim, 0.4);
    else denses[i].w_down = src.experts()[i].w_down;
  }
  MolaeConfig mc{c.hidden_dim, c.intermediate_dim, c.num_experts, c.top_k,
                 k,            mask,               c.activation};
  return MolaeLayer(mc, std::move(groups), std::move(latents), std::move(denses),
                    RouterWeights{src.router().w_router});
}

}  // namespace

TEST(GroupIndex, ContiguousOneBasedGroups) {
  for (std::size_t i = 1; i <= 8; ++i) EXPECT_EQ(group_index(i, 8), 1u);
  EXPECT_EQ(group_index(9, 8), 2u);
  EXPECT_EQ(group_index(16, 8), 2u);
  EXPECT_EQ(group_index(17, 8), 3u);
}

TEST(GroupIndex, SixtyExpertsInGroupsOfTenGiveSixGroups) {
  std::set<std::size_t> groups;
  for (std::size_t i = 1; i <= 60; ++i) groups.insert(group_index(i, 10));
  EXPECT_EQ(groups.size(), 6u);
  EXPECT_EQ(*groups.begin(), 1u);
  EXPECT_EQ(*groups.rbegin(), 6u);
}

TEST(GroupIndex, RejectsZeroArguments) {
  EXPECT_THROW(group_index(0, 4), ArgumentError);
  EXPECT_THROW(group_index(3, 0), ArgumentError);
}

TEST(LatentExpertForward, ZeroFactorsGiveZero) {
  std::vector<LatentGroup> groups(1);
  groups[0].b_up = Matrix(2, 4);
  groups[0].b_gate = Matrix(2, 4);
  groups[0].b_down = Matrix(4, 2);
  std::vector<LatentExpert> latents(1);
  latents[0].a_up = Matrix(2, 2);
  latents[0].a_gate = Matrix(2, 2);
  latents[0].a_down = Matrix(2, 2);
  MolaeLayer layer(MolaeConfig{4, 2, 1, 1, 1, OpMask::all(), Activation::kSilu},
                   std::move(groups), std::move(latents), std::vector<DenseOperators>(1),
                   RouterWeights{Matrix(1, 4)});
  const Vec y = latent_expert_forward(layer, 1, Vec{1.0, 2.0, 3.0, 4.0});
  for (double v : y) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(LatentExpertForward, IdentityLatentMapsReproduceDenseExpert) {
  const MoeLayer moe = random_moe(5, 3, 1, 1, 19);
  const ExpertWeights& e = moe.experts()[0];
  std::vector<LatentGroup> groups(1);
  groups[0].b_up = e.w_up;
  groups[0].b_gate = e.w_gate;
  groups[0].b_down = e.w_down;
  std::vector<LatentExpert> latents(1);
  latents[0].a_up = Matrix::identity(3);
  latents[0].a_gate = Matrix::identity(3);
  latents[0].a_down = Matrix::identity(3);
  MolaeLayer layer(MolaeConfig{5, 3, 1, 1, 1, OpMask::all(), Activation::kSilu},
                   std::move(groups), std::move(latents), std::vector<DenseOperators>(1),
                   RouterWeights{moe.router().w_router});
  Rng rng(20);
  for (int t = 0; t < 4; ++t) {
    const Vec x = rng.gaussian_vec(5);
    const Vec got = latent_expert_forward(layer, 1, x);
    const Vec want = expert_forward(e, x, Activation::kSilu);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-13);
  }
}

TEST(LatentExpertForward, HandEvaluatedTwoByOne) {
  // b_up = b_gate = [1 0], a_up = [2], a_gate = [1], a_down = [1],
  // b_down = [0 3]^T, identity activation, x = [1 5]:
  // inner = (2*1) * (1*1) = 2, output = [0 6].
  std::vector<LatentGroup> groups(1);
  groups[0].b_up = Matrix(1, 2, {1.0, 0.0});
  groups[0].b_gate = Matrix(1, 2, {1.0, 0.0});
  groups[0].b_down = Matrix(2, 1, {0.0, 3.0});
  std::vector<LatentExpert> latents(1);
  latents[0].a_up = Matrix(1, 1, {2.0});
  latents[0].a_gate = Matrix(1, 1, {1.0});
  latents[0].a_down = Matrix(1, 1, {1.0});
  MolaeLayer layer(MolaeConfig{2, 1, 1, 1, 1, OpMask::all(), Activation::kIdentity},
                   std::move(groups), std::move(latents), std::vector<DenseOperators>(1),
                   RouterWeights{Matrix(1, 2)});
  const Vec y = latent_expert_forward(layer, 1, Vec{1.0, 5.0});
  ASSERT_EQ(y.size(), 2u);
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[1], 6.0);
}

TEST(MolaeFfnForward, ZeroExpertsGiveResidual) {
  MolaeLayer layer = random_molae(4, 2, 3, 2, 3, OpMask::all(), 5);
  // Zero out every latent map by rebuilding with zero a matrices.
  std::vector<LatentExpert> latents(3);
  for (auto& le : latents) {
    le.a_up = Matrix(2, 2);
    le.a_gate = Matrix(2, 2);
    le.a_down = Matrix(2, 2);
  }
  MolaeLayer zeroed(layer.config(), layer.groups(), std::move(latents),
                    std::vector<DenseOperators>(3), RouterWeights{layer.router().w_router});
  Rng rng(6);
  const Vec x = rng.gaussian_vec(4);
  const Vec y = molae_ffn_forward(zeroed, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);
}

TEST(MolaeFfnForward, SingleGroupVsPerExpertGroupsSameComposites) {
  // One shared projection used by every expert (k=N) against per-expert
  // groups each holding a copy of the same projection (k=1): identical
  // composite operators, so identical outputs.
  const std::size_t n = 6, m = 3, N = 4;
  Rng rng(44);
  LatentGroup shared;
  shared.b_up = rng.gaussian_matrix(m, n, 0.5);
  shared.b_gate = rng.gaussian_matrix(m, n, 0.5);
  shared.b_down = rng.gaussian_matrix(n, m, 0.5);
  std::vector<LatentExpert> latents(N);
  for (auto& le : latents) {
    le.a_up = rng.gaussian_matrix(m, m, 0.5);
    le.a_gate = rng.gaussian_matrix(m, m, 0.5);
    le.a_down = rng.gaussian_matrix(m, m, 0.5);
  }
  const Matrix router = rng.gaussian_matrix(N, n, 0.5);

  MolaeLayer one_group(MolaeConfig{n, m, N, 2, N, OpMask::all(), Activation::kSilu},
                       {shared}, latents, std::vector<DenseOperators>(N),
                       RouterWeights{router});
  MolaeLayer per_expert(MolaeConfig{n, m, N, 2, 1, OpMask::all(), Activation::kSilu},
                        std::vector<LatentGroup>(N, shared), latents,
                        std::vector<DenseOperators>(N), RouterWeights{router});
  Rng probe(45);
  for (int t = 0; t < 6; ++t) {
    const Vec x = probe.gaussian_vec(n);
    const Vec ya = molae_ffn_forward(one_group, x);
    const Vec yb = molae_ffn_forward(per_expert, x);
    for (std::size_t i = 0; i < ya.size(); ++i) EXPECT_NEAR(ya[i], yb[i], 1e-12);
  }
}

TEST(MolaeFfnForward, EmptyMaskMatchesMoeBitForBit) {
  const MoeLayer moe = random_moe(6, 4, 5, 2, 61);
  const MolaeLayer hybrid = hybrid_from_moe(moe, 2, OpMask::none(), 62);
  Rng rng(63);
  for (int t = 0; t < 8; ++t) {
    const Vec x = rng.gaussian_vec(6);
    const Vec ya = ffn_forward(moe, x);
    const Vec yb = molae_ffn_forward(hybrid, x);
    for (std::size_t i = 0; i < ya.size(); ++i) EXPECT_EQ(ya[i], yb[i]);
  }
}

TEST(MolaeFfnForward, BatchMatchesRowwiseBitForBit) {
  const MolaeLayer layer = random_molae(5, 3, 4, 2, 2, OpMask::all(), 71);
  Rng rng(72);
  Matrix xs(5, 5);
  for (auto& v : xs.values()) v = rng.gaussian();
  const Matrix ys = molae_ffn_forward_batch(layer, xs);
  for (std::size_t r = 0; r < xs.rows(); ++r) {
    const Vec y = molae_ffn_forward(layer, xs.row(r));
    for (std::size_t j = 0; j < y.size(); ++j) EXPECT_EQ(ys(r, j), y[j]);
  }
}

TEST(GroupSharing, MutatingOneGroupTouchesOnlyItsExperts) {
  const std::size_t n = 5, m = 3, N = 4, k = 2;
  const MolaeLayer base = random_molae(n, m, N, 1, k, OpMask::all(), 83);
  std::vector<LatentGroup> perturbed_groups = base.groups();
  (*perturbed_groups[0].b_up)(0, 0) += 0.37;
  MolaeLayer perturbed(base.config(), std::move(perturbed_groups), base.latent_experts(),
                       base.dense_experts(), RouterWeights{base.router().w_router});
  Rng rng(84);
  const Vec x = rng.gaussian_vec(n);
  for (std::size_t i = 1; i <= N; ++i) {
    const Vec ya = latent_expert_forward(base, i, x);
    const Vec yb = latent_expert_forward(perturbed, i, x);
    double diff = 0.0;
    for (std::size_t j = 0; j < ya.size(); ++j) diff += std::abs(ya[j] - yb[j]);
    if (base.group_of(i) == 1) EXPECT_GT(diff, 0.0) << "expert " << i;
    else EXPECT_DOUBLE_EQ(diff, 0.0) << "expert " << i;
  }
}

TEST(CompositeOperator, IdentityLatentMapReturnsProjection) {
  const std::size_t n = 5, m = 3;
  Rng rng(91);
  std::vector<LatentGroup> groups(1);
  groups[0].b_up = rng.gaussian_matrix(m, n);
  groups[0].b_gate = rng.gaussian_matrix(m, n);
  groups[0].b_down = rng.gaussian_matrix(n, m);
  std::vector<LatentExpert> latents(1);
  latents[0].a_up = Matrix::identity(m);
  latents[0].a_gate = Matrix::identity(m);
  latents[0].a_down = Matrix::identity(m);
  MolaeLayer layer(MolaeConfig{n, m, 1, 1, 1, OpMask::all(), Activation::kSilu}, groups,
                   std::move(latents), std::vector<DenseOperators>(1),
                   RouterWeights{Matrix(1, n)});
  EXPECT_LE(max_abs_diff(composite_operator(layer, 1, Op::kUp), *groups[0].b_up), 1e-15);
  EXPECT_LE(max_abs_diff(composite_operator(layer, 1, Op::kDown), *groups[0].b_down), 1e-15);
}

TEST(CompositeOperator, DownTakesReverseOrderAndShape) {
  const MolaeLayer layer = random_molae(6, 3, 2, 1, 1, OpMask::all(), 92);
  const Matrix down = composite_operator(layer, 1, Op::kDown);
  EXPECT_EQ(down.rows(), 6u);
  EXPECT_EQ(down.cols(), 3u);
  const Matrix want =
      *layer.group(1).b_down * *layer.latent_expert(1).a_down;
  EXPECT_LE(max_abs_diff(down, want), 1e-15);
  const Matrix up = composite_operator(layer, 1, Op::kUp);
  EXPECT_EQ(up.rows(), 3u);
  EXPECT_EQ(up.cols(), 6u);
}

TEST(CompositeOperator, NonLatentOperatorRejected) {
  const MoeLayer moe = random_moe(4, 2, 2, 1, 93);
  const MolaeLayer hybrid = hybrid_from_moe(moe, 1, parse_op_mask("up,gate"), 94);
  EXPECT_NO_THROW(composite_operator(hybrid, 1, Op::kUp));
  EXPECT_THROW(composite_operator(hybrid, 1, Op::kDown), ArgumentError);
}

TEST(MolaeBackward, ZeroUpstreamGivesZeroGradients) {
  const MolaeLayer layer = random_molae(4, 2, 3, 2, 2, OpMask::all(), 99);
  Rng rng(100);
  MolaeForwardCache cache;
  molae_ffn_forward(layer, rng.gaussian_vec(4), &cache);
  const MolaeGradients g = molae_ffn_backward(layer, cache, Vec(4, 0.0));
  for (double v : g.x) EXPECT_DOUBLE_EQ(v, 0.0);
  for (const LatentGroupGrads& gg : g.groups) {
    EXPECT_DOUBLE_EQ(frobenius_norm(*gg.b_up), 0.0);
    EXPECT_DOUBLE_EQ(frobenius_norm(*gg.b_gate), 0.0);
    EXPECT_DOUBLE_EQ(frobenius_norm(*gg.b_down), 0.0);
  }
}

TEST(MolaeBackward, MissingCacheIsStateError) {
  const MolaeLayer layer = random_molae(4, 2, 2, 1, 1, OpMask::all(), 101);
  MolaeForwardCache cache;
  const Vec dy{1.0, 1.0, 1.0, 1.0};
  EXPECT_THROW(molae_ffn_backward(layer, cache, dy), StateError);
}

TEST(MolaeBackward, ChainRuleMatchesDenseCompositeGradients) {
  // Single expert, k = 1: the latent factor gradients must satisfy
  // dA = dW B^T (resp. B^T dW for the reversed down form) where dW is the
  // gradient of the dense layer built from the composite operators.
  const std::size_t n = 5, m = 3;
  const MolaeLayer latent = random_molae(n, m, 1, 1, 1, OpMask::all(), 111);
  ExpertWeights dense;
  dense.w_up = composite_operator(latent, 1, Op::kUp);
  dense.w_gate = composite_operator(latent, 1, Op::kGate);
  dense.w_down = composite_operator(latent, 1, Op::kDown);
  const MoeLayer moe(MoeConfig{n, m, 1, 1, Activation::kSilu}, {dense},
                     RouterWeights{latent.router().w_router});

  Rng rng(112);
  const Vec x = rng.gaussian_vec(n);
  const Vec dy = rng.gaussian_vec(n);

  MolaeForwardCache lc;
  molae_ffn_forward(latent, x, &lc);
  const MolaeGradients lg = molae_ffn_backward(latent, lc, dy);
  MoeForwardCache mc;
  ffn_forward(moe, x, &mc);
  const MoeGradients mg = ffn_backward(moe, mc, dy);

  const LatentExpert& le = latent.latent_expert(1);
  const LatentGroup& grp = latent.group(1);
  // Up/gate: W = A B, so dA = dW B^T and dB = A^T dW.
  EXPECT_LE(max_abs_diff(*lg.latent_experts[0].a_up,
                         mg.experts[0].up * transpose(*grp.b_up)),
            1e-11);
  EXPECT_LE(max_abs_diff(*lg.groups[0].b_up, transpose(*le.a_up) * mg.experts[0].up), 1e-11);
  EXPECT_LE(max_abs_diff(*lg.latent_experts[0].a_gate,
                         mg.experts[0].gate * transpose(*grp.b_gate)),
            1e-11);
  EXPECT_LE(max_abs_diff(*lg.groups[0].b_gate, transpose(*le.a_gate) * mg.experts[0].gate),
            1e-11);
  // Down: W = B A, so dB = dW A^T and dA = B^T dW.
  EXPECT_LE(max_abs_diff(*lg.groups[0].b_down, mg.experts[0].down * transpose(*le.a_down)),
            1e-11);
  EXPECT_LE(max_abs_diff(*lg.latent_experts[0].a_down,
                         transpose(*grp.b_down) * mg.experts[0].down),
            1e-11);
  // Inputs and router agree too.
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(lg.x[i], mg.x[i], 1e-11);
}

TEST(MolaeBackward, GroupGradientAccumulatesAcrossExperts) {
  // Two experts of the same group both selected: the shared projection
  // gradient is the sum of the two per-expert chain-rule contributions.
  const std::size_t n = 4, m = 2, N = 2;
  const MolaeLayer layer = random_molae(n, m, N, 2, 2, OpMask::all(), 121);
  Rng rng(122);
  const Vec x = rng.gaussian_vec(n);
  const Vec dy = rng.gaussian_vec(n);
  MolaeForwardCache cache;
  molae_ffn_forward(layer, x, &cache);
  const MolaeGradients g = molae_ffn_backward(layer, cache, dy);

  // Dense equivalent built from the composites; its per-expert dW gradients
  // chain back onto the shared projection as sum_i A_i^T dW_i.
  std::vector<ExpertWeights> both;
  for (std::size_t j = 1; j <= N; ++j) {
    ExpertWeights ej;
    ej.w_up = composite_operator(layer, j, Op::kUp);
    ej.w_gate = composite_operator(layer, j, Op::kGate);
    ej.w_down = composite_operator(layer, j, Op::kDown);
    both.push_back(std::move(ej));
  }
  const MoeLayer moe(MoeConfig{n, m, N, 2, Activation::kSilu}, std::move(both),
                     RouterWeights{layer.router().w_router});
  MoeForwardCache mc;
  ffn_forward(moe, x, &mc);
  const MoeGradients mg = ffn_backward(moe, mc, dy);
  Matrix sum_b_up(m, n);
  for (std::size_t i = 1; i <= N; ++i)
    sum_b_up = sum_b_up + transpose(*layer.latent_expert(i).a_up) * mg.experts[i - 1].up;
  EXPECT_LE(max_abs_diff(*g.groups[0].b_up, sum_b_up), 1e-11);
}

TEST(MolaeBackward, FiniteDifferencesAcrossHybridMasks) {
  const std::vector<OpMask> masks{OpMask::all(), parse_op_mask("up,gate"),
                                  parse_op_mask("gate,down"), parse_op_mask("down"),
                                  OpMask::none()};
  int tested = 0;
  for (std::size_t mi = 0; mi < masks.size(); ++mi) {
    const OpMask mask = masks[mi];
    const std::size_t n = 4, m = 2, N = 3, k = 2;
    const MolaeLayer layer = random_molae(n, m, N, 2, k, mask, 300 + mi);
    Rng rng(400 + mi);
    const Vec x = rng.gaussian_vec(n);
    const Vec dy = rng.gaussian_vec(n);

    Vec probs;
    route_top_k(layer.router(), x, 2, &probs);
    Vec sorted = probs;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    if (sorted[1] - sorted[2] < 1e-3) continue;
    ++tested;

    MolaeForwardCache cache;
    molae_ffn_forward(layer, x, &cache);
    const MolaeGradients g = molae_ffn_backward(layer, cache, dy);

    MolaeConfig cfg = layer.config();
    std::vector<LatentGroup> groups = layer.groups();
    std::vector<LatentExpert> latents = layer.latent_experts();
    std::vector<DenseOperators> denses = layer.dense_experts();
    Matrix router = layer.router().w_router;
    Vec xv = x;
    auto eval = [&]() {
      MolaeLayer l(cfg, groups, latents, denses, RouterWeights{router});
      const Vec y = molae_ffn_forward(l, xv);
      double acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += dy[i] * y[i];
      return acc;
    };

    double max_rel = 0.0;
    auto check_matrix = [&](const Matrix& grad, Matrix& slot_matrix) {
      for (std::size_t i = 0; i < slot_matrix.size(); ++i)
        max_rel = std::max(
            max_rel, rel_err(grad.values()[i], central_diff(eval, slot_matrix.values()[i])));
    };
    for (std::size_t i = 0; i < xv.size(); ++i)
      max_rel = std::max(max_rel, rel_err(g.x[i], central_diff(eval, xv[i])));
    check_matrix(g.router, router);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      if (mask.up) check_matrix(*g.groups[gi].b_up, *groups[gi].b_up);
      if (mask.gate) check_matrix(*g.groups[gi].b_gate, *groups[gi].b_gate);
      if (mask.down) check_matrix(*g.groups[gi].b_down, *groups[gi].b_down);
    }
    for (std::size_t e = 0; e < latents.size(); ++e) {
      if (mask.up) check_matrix(*g.latent_experts[e].a_up, *latents[e].a_up);
      if (mask.gate) check_matrix(*g.latent_experts[e].a_gate, *latents[e].a_gate);
      if (mask.down) check_matrix(*g.latent_experts[e].a_down, *latents[e].a_down);
      if (!mask.up) check_matrix(*g.dense_experts[e].w_up, *denses[e].w_up);
      if (!mask.gate) check_matrix(*g.dense_experts[e].w_gate, *denses[e].w_gate);
      if (!mask.down) check_matrix(*g.dense_experts[e].w_down, *denses[e].w_down);
    }
    EXPECT_LE(max_rel, 1e-4) << "mask " << op_mask_to_string(mask);
  }
  EXPECT_GE(tested, 3);
}

TEST(MolaeCensus, FullMaskMatchesClosedFormWhenGroupsDivide) {
  const MolaeLayer layer = random_molae(8, 4, 6, 2, 3, OpMask::all(), 131);
  ArchSpec spec{8, 4, 6, 3, OpMask::all()};
  EXPECT_EQ(census(layer), molae_param_count(spec));
}

TEST(MolaeLayer, PresencePatternViolationsRejected) {
  // Latent expert missing a masked operator.
  std::vector<LatentGroup> groups(1);
  groups[0].b_up = Matrix(2, 4);
  groups[0].b_gate = Matrix(2, 4);
  groups[0].b_down = Matrix(4, 2);
  std::vector<LatentExpert> latents(1);
  latents[0].a_up = Matrix(2, 2);
  latents[0].a_gate = Matrix(2, 2);
  // a_down missing
  EXPECT_THROW(MolaeLayer(MolaeConfig{4, 2, 1, 1, 1, OpMask::all(), Activation::kSilu}, groups,
                          latents, std::vector<DenseOperators>(1), RouterWeights{Matrix(1, 4)}),
               ArgumentError);
  // Wrong group count.
  EXPECT_THROW(MolaeLayer(MolaeConfig{4, 2, 4, 1, 2, OpMask::none(), Activation::kSilu},
                          std::vector<LatentGroup>(3), std::vector<LatentExpert>(4),
                          std::vector<DenseOperators>(4), RouterWeights{Matrix(4, 4)}),
               ArgumentError);
}
