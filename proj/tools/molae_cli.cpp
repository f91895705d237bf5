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

// Command-line driver: synthetic model generation, mixture-to-latent
// transformation, equivalence verification, cost accounting, raw forward
// evaluation and micro-benchmarking, all over the single-file container
// format. Every command writes a reproducibility manifest.
//
// Exit codes: 0 success, 1 usage error, 2 I/O or format error,
// 3 numerical failure, 4 verification failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "molae/accounting.hpp"
#include "molae/container.hpp"
#include "molae/generate.hpp"
#include "molae/json_io.hpp"
#include "molae/transform.hpp"

namespace {

using namespace molae;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerification = 4;

struct GenArgs {
  std::string kind = "moe";
  std::size_t n = 512;
  std::size_t m = 256;
  std::size_t experts = 32;
  std::size_t topk = 2;
  std::size_t group_size = 8;
  std::string ops = "up,gate,down";
  std::string act = "silu";
  std::uint64_t seed = 1;
  std::string out;
  std::string dtype = "f32";
  std::string manifest;
};

struct TransformArgs {
  std::string in;
  std::string out;
  std::size_t latent_dim = 0;  // 0: use the checkpoint's intermediate dim
  std::string rank = "full";
  double rank_ratio = 0.0;
  std::size_t group_size = 8;
  std::string ops = "up,gate,down";
  std::string mode = "plain";
  std::size_t calib_samples = 256;
  std::uint64_t calib_seed = 20240501;
  double lambda = 0.0;
  std::string report;
  std::string dtype;
  std::string manifest;
};

struct VerifyArgs {
  std::string a;
  std::string b;
  std::size_t probes = 64;
  std::uint64_t seed = 1;
  double max_rel_dev = 1e-6;
  std::string manifest;
};

struct CountArgs {
  std::string in;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t experts = 0;
  std::size_t group_size = 8;
  std::size_t topk = 0;
  std::string ops = "up,gate,down";
  bool json = false;
  std::string manifest;
};

struct ForwardArgs {
  std::string in;
  std::string input;
  std::string out;
  std::string manifest;
};

struct BenchArgs {
  std::string in;
  std::size_t probes = 64;
  std::uint64_t seed = 1;
  std::string manifest;
};

Dtype parse_dtype(const std::string& s) {
  if (s == "f32") return Dtype::kF32;
  if (s == "f64") return Dtype::kF64;
  throw ArgumentError("unknown dtype '" + s + "' (expected f32|f64)");
}

std::string default_manifest(const std::string& explicit_path, const std::string& out_path,
                             const std::string& command) {
  if (!explicit_path.empty()) return explicit_path;
  if (!out_path.empty()) return out_path + ".manifest.json";
  return command + ".manifest.json";
}

int run_gen(const GenArgs& args) {
  GenConfig cfg;
  cfg.hidden_dim = args.n;
  cfg.intermediate_dim = args.m;
  cfg.num_experts = args.experts;
  cfg.top_k = args.topk;
  cfg.group_size = args.group_size;
  cfg.op_mask = parse_op_mask(args.ops);
  cfg.activation = parse_activation(args.act);
  const AnyLayer layer = generate(parse_gen_kind(args.kind), cfg, args.seed);
  save(layer, args.out, parse_dtype(args.dtype));

  RunManifest manifest;
  manifest.command = "gen";
  manifest.seed = args.seed;
  manifest.options = Json{{"kind", args.kind},       {"n", args.n},
                          {"m", args.m},             {"experts", args.experts},
                          {"topk", args.topk},       {"group_size", args.group_size},
                          {"ops", args.ops},         {"act", args.act},
                          {"dtype", args.dtype},     {"out", args.out}};
  manifest.add_output(args.out);
  manifest.report = Json{{"ffn_params", census(layer)},
                         {"router_params", router_param_count(layer)}};
  manifest.write(default_manifest(args.manifest, args.out, "gen"));
  std::printf("wrote %s (%llu ffn parameters)\n", args.out.c_str(),
              static_cast<unsigned long long>(census(layer)));
  return kExitOk;
}

int run_transform(const TransformArgs& args) {
  const LoadedModel src_model = load(args.in);
  if (!std::holds_alternative<MoeLayer>(src_model.layer))
    throw ArgumentError("transform: input '" + args.in + "' is not a moe container");
  const MoeLayer& src = std::get<MoeLayer>(src_model.layer);
  const std::size_t m = src.config().intermediate_dim;

  TransformOptions opts;
  opts.latent_dim = args.latent_dim == 0 ? m : args.latent_dim;
  opts.group_size = args.group_size;
  opts.op_mask = parse_op_mask(args.ops);
  opts.lambda = args.lambda;

  if (args.rank_ratio > 0.0) {
    if (args.rank != "full")
      throw ArgumentError("transform: --rank and --rank-ratio are mutually exclusive");
    if (args.rank_ratio > 1.0)
      throw ArgumentError("transform: --rank-ratio must be in (0, 1]");
    // Ratio of the full rank bound, rounded half up.
    const double full = static_cast<double>(std::min(m, src.config().hidden_dim));
    opts.target_rank =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(full * args.rank_ratio + 0.5)));
  } else if (args.rank == "full") {
    opts.target_rank = 0;
  } else {
    try {
      opts.target_rank = static_cast<std::size_t>(std::stoull(args.rank));
    } catch (const std::exception&) {
      throw ArgumentError("transform: --rank expects an integer or 'full', got '" + args.rank +
                          "'");
    }
  }

  ActivationBatch acts;
  const ActivationBatch* acts_ptr = nullptr;
  if (args.mode == "activation-aware") {
    opts.mode = TransformMode::kActivationAware;
    acts = collect_activation_batch(src, args.calib_samples, args.calib_seed);
    acts_ptr = &acts;
  } else if (args.mode != "plain") {
    throw ArgumentError("transform: unknown mode '" + args.mode +
                        "' (expected plain|activation-aware)");
  }

  auto [dst, report] = transform_layer(src, opts, acts_ptr);
  const Dtype out_dtype = args.dtype.empty() ? src_model.dtype : parse_dtype(args.dtype);
  save(AnyLayer{dst}, args.out, out_dtype);

  const Json report_json = transform_report_to_json(report);
  if (!args.report.empty()) {
    std::ofstream f(args.report, std::ios::trunc);
    if (!f) throw IoError("cannot write report '" + args.report + "'");
    f << report_json.dump(2) << "\n";
  }

  RunManifest manifest;
  manifest.command = "transform";
  manifest.seed = args.calib_seed;
  manifest.options = Json{{"in", args.in},
                          {"out", args.out},
                          {"latent_dim", opts.latent_dim},
                          {"rank", args.rank},
                          {"rank_ratio", args.rank_ratio},
                          {"group_size", args.group_size},
                          {"ops", args.ops},
                          {"mode", args.mode},
                          {"calib_samples", args.calib_samples},
                          {"lambda", args.lambda}};
  manifest.add_input(args.in);
  manifest.add_output(args.out);
  if (!args.report.empty()) manifest.add_output(args.report);
  manifest.report = Json{{"total_residual_sq", report.total_residual_sq},
                         {"forward_deviation", deviation_to_json(report.forward_deviation)},
                         {"ffn_params_before", census(AnyLayer{src})},
                         {"ffn_params_after", census(AnyLayer{dst})}};
  manifest.write(default_manifest(args.manifest, args.out, "transform"));

  std::printf("wrote %s  residual^2 %.6e  max forward deviation %.3e  params %llu -> %llu\n",
              args.out.c_str(), report.total_residual_sq,
              report.forward_deviation.max_rel_dev,
              static_cast<unsigned long long>(census(AnyLayer{src})),
              static_cast<unsigned long long>(census(AnyLayer{dst})));
  return kExitOk;
}

int run_verify(const VerifyArgs& args) {
  const LoadedModel a = load(args.a);
  const LoadedModel b = load(args.b);
  const DeviationStats stats = verify_equivalence(a.layer, b.layer, args.probes, args.seed);

  RunManifest manifest;
  manifest.command = "verify";
  manifest.seed = args.seed;
  manifest.options = Json{{"a", args.a},
                          {"b", args.b},
                          {"probes", args.probes},
                          {"max_rel_dev", args.max_rel_dev}};
  manifest.add_input(args.a);
  manifest.add_input(args.b);
  manifest.report = deviation_to_json(stats);
  manifest.report["pass"] = stats.max_rel_dev <= args.max_rel_dev;
  manifest.write(default_manifest(args.manifest, "", "verify"));

  std::printf("max %.6e  mean %.6e  routing agreement %.4f  (%zu probes, threshold %.3e)\n",
              stats.max_rel_dev, stats.mean_rel_dev, stats.routing_agreement, stats.probes,
              args.max_rel_dev);
  if (stats.max_rel_dev <= args.max_rel_dev) {
    std::printf("PASS\n");
    return kExitOk;
  }
  std::printf("FAIL\n");
  return kExitVerification;
}

int run_count(const CountArgs& args) {
  ArchSpec spec;
  Json census_json;
  std::size_t topk = args.topk;
  if (!args.in.empty()) {
    const LoadedModel model = load(args.in);
    spec.hidden_dim = any_hidden_dim(model.layer);
    spec.num_experts = any_num_experts(model.layer);
    topk = any_top_k(model.layer);
    if (std::holds_alternative<MolaeLayer>(model.layer)) {
      const MolaeConfig& c = std::get<MolaeLayer>(model.layer).config();
      spec.intermediate_dim = c.intermediate_dim;
      spec.group_size = c.group_size;
      spec.op_mask = c.op_mask;
    } else {
      spec.intermediate_dim = std::get<MoeLayer>(model.layer).config().intermediate_dim;
      spec.group_size = args.group_size;
      spec.op_mask = parse_op_mask(args.ops);
    }
    census_json = Json{{"ffn_params", census(model.layer)},
                       {"router_params", router_param_count(model.layer)}};
  } else {
    if (args.n == 0 || args.m == 0 || args.experts == 0)
      throw ArgumentError("count: provide --in or all of --n --m --experts");
    spec.hidden_dim = args.n;
    spec.intermediate_dim = args.m;
    spec.num_experts = args.experts;
    spec.group_size = args.group_size;
    spec.op_mask = parse_op_mask(args.ops);
  }

  const CostReport r = cost_report(spec);
  Json j = cost_report_to_json(spec, r);
  if (!census_json.is_null()) j["census"] = census_json;
  if (topk > 0) {
    j["active"] = Json{{"topk", topk},
                       {"moe_flops", moe_flops_active(spec, topk)},
                       {"molae_flops", molae_flops_active(spec, topk)},
                       {"note", "active-expert extension; projection count is an upper bound"}};
  }

  if (args.json) {
    std::printf("%s\n", j.dump(2).c_str());
  } else {
    std::printf("arch: n=%zu m=%zu experts=%zu group-size=%zu ops=%s\n", spec.hidden_dim,
                spec.intermediate_dim, spec.num_experts, spec.group_size,
                op_mask_to_string(spec.op_mask).c_str());
    std::printf("%-18s %14s %14s\n", "", "params", "flops/fwd");
    std::printf("%-18s %14llu %14llu\n", "standard mixture",
                static_cast<unsigned long long>(r.moe_params),
                static_cast<unsigned long long>(r.moe_flops));
    std::printf("%-18s %14llu %14llu\n", "latent mixture",
                static_cast<unsigned long long>(r.molae_params),
                static_cast<unsigned long long>(r.molae_flops));
    std::printf("%-18s %13.3fx %13.3fx\n", "compression", r.param_ratio, r.flop_ratio);
    if (topk > 0)
      std::printf("%-18s %14llu %14llu   (top-%zu active, extension)\n", "active flops",
                  static_cast<unsigned long long>(moe_flops_active(spec, topk)),
                  static_cast<unsigned long long>(molae_flops_active(spec, topk)), topk);
    if (!census_json.is_null())
      std::printf("%-18s %14llu   (router %llu, reported separately)\n", "census",
                  census_json["ffn_params"].get<unsigned long long>(),
                  census_json["router_params"].get<unsigned long long>());
    if (spec.num_experts % spec.group_size != 0)
      std::printf("note: group size does not divide the expert count; closed forms use "
                  "floor(N/k) projection sets, the built layer carries ceil(N/k)\n");
  }

  RunManifest manifest;
  manifest.command = "count";
  manifest.options = Json{{"in", args.in},
                          {"n", spec.hidden_dim},
                          {"m", spec.intermediate_dim},
                          {"experts", spec.num_experts},
                          {"group_size", spec.group_size},
                          {"ops", op_mask_to_string(spec.op_mask)}};
  if (!args.in.empty()) manifest.add_input(args.in);
  manifest.report = j;
  manifest.write(default_manifest(args.manifest, "", "count"));
  return kExitOk;
}

std::vector<float> read_f32_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() % 4 != 0)
    throw FormatError(path + ": size " + std::to_string(bytes.size()) +
                          " is not a multiple of 4",
                      bytes.size());
  std::vector<float> vals(bytes.size() / 4);
  std::memcpy(vals.data(), bytes.data(), bytes.size());
  return vals;
}

int run_forward(const ForwardArgs& args) {
  const LoadedModel model = load(args.in);
  const std::size_t n = any_hidden_dim(model.layer);
  const std::vector<float> in_vals = read_f32_file(args.input);
  if (in_vals.size() % n != 0)
    throw FormatError(args.input + ": value count " + std::to_string(in_vals.size()) +
                          " is not a multiple of the hidden dim " + std::to_string(n),
                      in_vals.size() * 4);
  const std::size_t rows = in_vals.size() / n;

  std::vector<float> out_vals(in_vals.size());
  for (std::size_t r = 0; r < rows; ++r) {
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(in_vals[r * n + i]);
    const Vec y = any_forward(model.layer, x);
    for (std::size_t i = 0; i < n; ++i) out_vals[r * n + i] = static_cast<float>(y[i]);
  }
  {
    const std::string tmp = args.out + ".tmp";
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + tmp + "'");
    f.write(reinterpret_cast<const char*>(out_vals.data()),
            static_cast<std::streamsize>(out_vals.size() * 4));
    f.close();
    std::error_code ec;
    std::filesystem::rename(tmp, args.out, ec);
    if (ec) throw IoError("cannot rename '" + tmp + "': " + ec.message());
  }

  RunManifest manifest;
  manifest.command = "forward";
  manifest.options = Json{{"in", args.in}, {"input", args.input}, {"out", args.out}};
  manifest.add_input(args.in);
  manifest.add_input(args.input);
  manifest.add_output(args.out);
  manifest.report = Json{{"rows", rows}, {"hidden_dim", n}};
  manifest.write(default_manifest(args.manifest, args.out, "forward"));
  std::printf("forwarded %zu rows of dim %zu -> %s\n", rows, n, args.out.c_str());
  return kExitOk;
}

int run_bench(const BenchArgs& args) {
  const LoadedModel model = load(args.in);
  const std::size_t n = any_hidden_dim(model.layer);
  if (args.probes == 0) throw ArgumentError("bench: need at least one probe");

  ArchSpec spec;
  spec.hidden_dim = n;
  spec.num_experts = any_num_experts(model.layer);
  std::uint64_t flops = 0;
  if (std::holds_alternative<MolaeLayer>(model.layer)) {
    const MolaeConfig& c = std::get<MolaeLayer>(model.layer).config();
    spec.intermediate_dim = c.intermediate_dim;
    spec.group_size = c.group_size;
    spec.op_mask = c.op_mask;
    flops = molae_flops_active(spec, c.top_k);
  } else {
    const MoeConfig& c = std::get<MoeLayer>(model.layer).config();
    spec.intermediate_dim = c.intermediate_dim;
    spec.group_size = 1;
    flops = moe_flops_active(spec, c.top_k);
  }

  Rng rng(args.seed);
  std::vector<Vec> probes;
  for (std::size_t p = 0; p < args.probes; ++p) probes.push_back(rng.gaussian_vec(n));

  // Warm-up pass, then timed loop.
  double sink = 0.0;
  for (const Vec& x : probes) sink += any_forward(model.layer, x)[0];
  const auto t0 = std::chrono::steady_clock::now();
  for (const Vec& x : probes) sink += any_forward(model.layer, x)[0];
  const auto t1 = std::chrono::steady_clock::now();
  const double ns =
      static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()) /
      static_cast<double>(args.probes);

  std::printf("%zu probes: %.0f ns/forward, %llu analytic flops (active experts), %.3f GFLOP/s\n",
              args.probes, ns, static_cast<unsigned long long>(flops),
              static_cast<double>(flops) / std::max(ns, 1.0));
  if (sink == 42.0) std::printf("\n");  // keep the loop live

  // Wall-clock numbers stay out of the manifest so reruns stay byte-identical.
  RunManifest manifest;
  manifest.command = "bench";
  manifest.seed = args.seed;
  manifest.options = Json{{"in", args.in}, {"probes", args.probes}};
  manifest.add_input(args.in);
  manifest.report = Json{{"probes", args.probes}, {"analytic_flops_active", flops}};
  manifest.write(default_manifest(args.manifest, "", "bench"));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixture-of-latent-experts reference toolkit"};
  app.require_subcommand(1);

  GenArgs gen_args;
  CLI::App* gen_cmd = app.add_subcommand("gen", "generate a synthetic model container");
  gen_cmd->add_option("--kind", gen_args.kind, "moe|molae|planted")->capture_default_str();
  gen_cmd->add_option("--n", gen_args.n, "hidden dimension")->capture_default_str();
  gen_cmd->add_option("--m", gen_args.m, "intermediate dimension")->capture_default_str();
  gen_cmd->add_option("--experts", gen_args.experts, "expert count")->capture_default_str();
  gen_cmd->add_option("--topk", gen_args.topk, "active experts per input")->capture_default_str();
  gen_cmd->add_option("--group-size", gen_args.group_size, "experts per projection group")
      ->capture_default_str();
  gen_cmd->add_option("--ops", gen_args.ops, "latent operators for kind=molae")
      ->capture_default_str();
  gen_cmd->add_option("--act", gen_args.act, "silu|relu|identity")->capture_default_str();
  gen_cmd->add_option("--seed", gen_args.seed, "rng seed")->capture_default_str();
  gen_cmd->add_option("--out", gen_args.out, "output container path")->required();
  gen_cmd->add_option("--dtype", gen_args.dtype, "f32|f64")->capture_default_str();
  gen_cmd->add_option("--manifest", gen_args.manifest, "manifest path (default <out>.manifest.json)");

  TransformArgs tr_args;
  CLI::App* tr_cmd = app.add_subcommand("transform", "factor a moe container into latent form");
  tr_cmd->add_option("--in", tr_args.in, "input moe container")->required();
  tr_cmd->add_option("--out", tr_args.out, "output molae container")->required();
  tr_cmd->add_option("--latent-dim", tr_args.latent_dim,
                     "latent dimension (default: the checkpoint's intermediate dim)");
  tr_cmd->add_option("--rank", tr_args.rank, "per-expert rank reduction: integer or 'full'")
      ->capture_default_str();
  tr_cmd->add_option("--rank-ratio", tr_args.rank_ratio,
                     "rank as a ratio of full rank (alternative to --rank)");
  tr_cmd->add_option("--group-size", tr_args.group_size, "experts per shared projection")
      ->capture_default_str();
  tr_cmd->add_option("--ops", tr_args.ops, "operators to factor, e.g. gate,down")
      ->capture_default_str();
  tr_cmd->add_option("--mode", tr_args.mode, "plain|activation-aware")->capture_default_str();
  tr_cmd->add_option("--calib-samples", tr_args.calib_samples,
                     "probes routed through the source for activation-aware mode")
      ->capture_default_str();
  tr_cmd->add_option("--calib-seed", tr_args.calib_seed, "calibration rng seed")
      ->capture_default_str();
  tr_cmd->add_option("--lambda", tr_args.lambda,
                     "Gram regularization (0 = auto on Cholesky failure)")
      ->capture_default_str();
  tr_cmd->add_option("--report", tr_args.report, "write the factorization report JSON here");
  tr_cmd->add_option("--dtype", tr_args.dtype, "output dtype (default: input dtype)");
  tr_cmd->add_option("--manifest", tr_args.manifest, "manifest path");

  VerifyArgs vf_args;
  CLI::App* vf_cmd = app.add_subcommand("verify", "compare two containers on random probes");
  vf_cmd->add_option("--a", vf_args.a, "first container")->required();
  vf_cmd->add_option("--b", vf_args.b, "second container")->required();
  vf_cmd->add_option("--probes", vf_args.probes, "probe count")->capture_default_str();
  vf_cmd->add_option("--seed", vf_args.seed, "probe rng seed")->capture_default_str();
  vf_cmd->add_option("--max-rel-dev", vf_args.max_rel_dev,
                     "pass threshold on the max relative deviation")
      ->capture_default_str();
  vf_cmd->add_option("--manifest", vf_args.manifest, "manifest path");

  CountArgs ct_args;
  CLI::App* ct_cmd = app.add_subcommand("count", "closed-form parameter and flop accounting");
  ct_cmd->add_option("--in", ct_args.in, "read the architecture from a container");
  ct_cmd->add_option("--n", ct_args.n, "hidden dimension");
  ct_cmd->add_option("--m", ct_args.m, "intermediate dimension");
  ct_cmd->add_option("--experts", ct_args.experts, "expert count");
  ct_cmd->add_option("--group-size", ct_args.group_size, "experts per projection group")
      ->capture_default_str();
  ct_cmd->add_option("--topk", ct_args.topk, "include the active-expert flop extension");
  ct_cmd->add_option("--ops", ct_args.ops, "latent operator mask")->capture_default_str();
  ct_cmd->add_flag("--json", ct_args.json, "emit the JSON report on stdout instead of the table");
  ct_cmd->add_option("--manifest", ct_args.manifest, "manifest path");

  ForwardArgs fw_args;
  CLI::App* fw_cmd = app.add_subcommand("forward", "run raw float32 inputs through a container");
  fw_cmd->add_option("--in", fw_args.in, "model container")->required();
  fw_cmd->add_option("--input", fw_args.input, "raw little-endian float32 rows")->required();
  fw_cmd->add_option("--out", fw_args.out, "raw float32 outputs")->required();
  fw_cmd->add_option("--manifest", fw_args.manifest, "manifest path");

  BenchArgs bn_args;
  CLI::App* bn_cmd = app.add_subcommand("bench", "time forward passes against analytic flops");
  bn_cmd->add_option("--in", bn_args.in, "model container")->required();
  bn_cmd->add_option("--probes", bn_args.probes, "probe count")->capture_default_str();
  bn_cmd->add_option("--seed", bn_args.seed, "probe rng seed")->capture_default_str();
  bn_cmd->add_option("--manifest", bn_args.manifest, "manifest path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return run_gen(gen_args);
    if (tr_cmd->parsed()) return run_transform(tr_args);
    if (vf_cmd->parsed()) return run_verify(vf_args);
    if (ct_cmd->parsed()) return run_count(ct_args);
    if (fw_cmd->parsed()) return run_forward(fw_args);
    if (bn_cmd->parsed()) return run_bench(bn_args);
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
