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
#ifndef MOLAE_JSON_IO_HPP
#define MOLAE_JSON_IO_HPP

// JSON report and run-manifest serialization. Requires nlohmann/json
// (json.hpp) on the include path; everything else in the library is
// standalone.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "molae/accounting.hpp"
#include "molae/error.hpp"
#include "molae/ops.hpp"
#include "molae/transform.hpp"

namespace molae {

using Json = nlohmann::ordered_json;

/// FNV-1a 64-bit content hash, used for manifest digests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return std::string(buf);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::string file_digest(const std::string& path) {
  return fnv1a64_hex(read_file_bytes(path));
}

inline Json deviation_to_json(const DeviationStats& d) {
  return Json{{"max_rel_dev", d.max_rel_dev},
              {"mean_rel_dev", d.mean_rel_dev},
              {"routing_agreement", d.routing_agreement},
              {"probes", d.probes},
              {"seed", d.seed}};
}

inline Json transform_report_to_json(const TransformReport& report) {
  Json entries = Json::array();
  for (const TransformReport::Entry& e : report.entries) {
    Json j{{"group", e.group},
           {"operator", op_name(e.op)},
           {"residual_sq", e.residual_sq},
           {"stack_energy", e.stack_energy},
           {"relative_residual", e.relative_residual},
           {"retained_energy", e.retained_energy},
           {"exact", e.exact},
           {"common_nullity", e.common_nullity},
           {"activation_aware", e.activation_aware}};
    if (e.activation_aware) {
      j["lambda_used"] = e.lambda_used;
      j["regularized"] = e.regularized;
      j["plain_fallback_experts"] = e.plain_fallback_experts;
    }
    entries.push_back(std::move(j));
  }
  return Json{{"per_operator", std::move(entries)},
              {"total_residual_sq", report.total_residual_sq},
              {"forward_deviation", deviation_to_json(report.forward_deviation)}};
}

inline Json cost_report_to_json(const ArchSpec& spec, const CostReport& r) {
  Json j{{"arch",
          Json{{"hidden_dim", spec.hidden_dim},
               {"intermediate_dim", spec.intermediate_dim},
               {"num_experts", spec.num_experts},
               {"group_size", spec.group_size},
               {"op_mask", op_mask_to_string(spec.op_mask)}}},
         {"moe", Json{{"params", r.moe_params}, {"flops", r.moe_flops}}},
         {"molae", Json{{"params", r.molae_params}, {"flops", r.molae_flops}}},
         {"ratios", Json{{"params", r.param_ratio}, {"flops", r.flop_ratio}}}};
  // Table-style closed forms use floor(N/k) projection sets; a built layer
  // carries ceil(N/k). Flag configs where the two differ.
  j["group_count_floor"] = spec.num_experts / spec.group_size;
  j["group_count_actual"] = group_count(spec.num_experts, spec.group_size);
  j["formula_census_mismatch"] = (spec.num_experts % spec.group_size) != 0;
  return j;
}

/// Reproducibility record written by every CLI command: the exact invocation,
/// content digests of everything read and written, and the command's summary.
struct RunManifest {
  std::string command;
  Json options = Json::object();
  std::uint64_t seed = 0;
  Json inputs = Json::array();
  Json outputs = Json::array();
  Json report = Json::object();

  void add_input(const std::string& path) {
    inputs.push_back(Json{{"path", path}, {"fnv1a64", file_digest(path)}});
  }
  void add_output(const std::string& path) {
    outputs.push_back(Json{{"path", path}, {"fnv1a64", file_digest(path)}});
  }

  Json to_json() const {
    return Json{{"command", command}, {"options", options},   {"seed", seed},
                {"inputs", inputs},   {"outputs", outputs},   {"report", report}};
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write manifest '" + path + "'");
    f << to_json().dump(2) << "\n";
  }
};

}  // namespace molae

#endif  // MOLAE_JSON_IO_HPP
