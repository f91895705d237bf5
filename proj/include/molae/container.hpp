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
#ifndef MOLAE_CONTAINER_HPP
#define MOLAE_CONTAINER_HPP

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "molae/error.hpp"
#include "molae/latent.hpp"
#include "molae/matrix.hpp"
#include "molae/moe.hpp"
#include "molae/ops.hpp"

namespace molae {

// Single-file model container, all fields little-endian and fixed width:
//
//   offset size  field
//   0      4     magic "MOLM"
//   4      1     format version (1)
//   5      1     layer kind: 0 = moe, 1 = molae
//   6      1     activation id
//   7      1     dtype: 4 = float32, 8 = float64
//   8      4     u32 hidden dim n
//   12     4     u32 intermediate dim m
//   16     4     u32 expert count N
//   20     4     u32 top_k
//   24     4     u32 group size k (0 for moe)
//   28     1     op mask bits (0 for moe)
//   29     3     reserved, zero
//   32     4     u32 tensor count
//   36     ...   tensor table: u16 name length, name bytes,
//                u32 rows, u32 cols, u64 payload offset
//   ...    ...   payload: raw row-major tensor values, tightly packed,
//                ascending offsets
//
// The tensor set and shapes are fully determined by the header config; load
// rejects any deviation.

inline constexpr char kMagic[4] = {'M', 'O', 'L', 'M'};
inline constexpr std::uint8_t kFormatVersion = 1;

enum class Dtype : std::uint8_t { kF32 = 4, kF64 = 8 };

struct TensorEntry {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint64_t offset = 0;  // into the payload
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  std::uint64_t pos() const { return pos_; }

  void need(std::uint64_t count, const std::string& what) {
    if (pos_ + count > bytes_.size()) {
      throw FormatError(path_ + ": truncated while reading " + what + " (need " +
                            std::to_string(pos_ + count) + " bytes, file has " +
                            std::to_string(bytes_.size()) + ")",
                        bytes_.size());
    }
  }

  std::uint8_t u8(const std::string& what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16(const std::string& what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const std::string& what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::string str(std::size_t len, const std::string& what) {
    need(len, what);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

 private:
  const std::string& bytes_;
  std::string path_;
  std::uint64_t pos_ = 0;
};

inline void append_values(std::string& out, const Matrix& m, Dtype dtype) {
  if (dtype == Dtype::kF32) {
    for (double v : m.values()) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  } else {
    for (double v : m.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put_u64(out, bits);
    }
  }
}

inline Matrix read_values(Reader& r, const TensorEntry& e, Dtype dtype,
                          const std::string& path) {
  Matrix m(e.rows, e.cols);
  const std::string what = "tensor '" + e.name + "'";
  for (double& v : m.values()) {
    if (dtype == Dtype::kF32) {
      const std::uint32_t bits = r.u32(what);
      float f;
      std::memcpy(&f, &bits, 4);
      v = static_cast<double>(f);
    } else {
      const std::uint64_t bits = r.u64(what);
      double d;
      std::memcpy(&d, &bits, 8);
      v = d;
    }
    if (!std::isfinite(v)) {
      throw FormatError(path + ": non-finite value in tensor '" + e.name + "'", r.pos());
    }
  }
  return m;
}

// Canonical tensor schema (name, rows, cols) implied by a layer config.
struct SchemaEntry {
  std::string name;
  std::size_t rows;
  std::size_t cols;
};

inline std::vector<SchemaEntry> moe_schema(const MoeConfig& c) {
  std::vector<SchemaEntry> s;
  s.push_back({"router.weight", c.num_experts, c.hidden_dim});
  for (std::size_t i = 1; i <= c.num_experts; ++i) {
    const std::string p = "expert." + std::to_string(i) + ".";
    s.push_back({p + "up.weight", c.intermediate_dim, c.hidden_dim});
    s.push_back({p + "gate.weight", c.intermediate_dim, c.hidden_dim});
    s.push_back({p + "down.weight", c.hidden_dim, c.intermediate_dim});
  }
  return s;
}

inline std::vector<SchemaEntry> molae_schema(const MolaeConfig& c) {
  std::vector<SchemaEntry> s;
  s.push_back({"router.weight", c.num_experts, c.hidden_dim});
  const std::size_t groups = group_count(c.num_experts, c.group_size);
  for (std::size_t g = 1; g <= groups; ++g) {
    const std::string p = "group." + std::to_string(g) + ".";
    if (c.op_mask.up) s.push_back({p + "up.proj", c.intermediate_dim, c.hidden_dim});
    if (c.op_mask.gate) s.push_back({p + "gate.proj", c.intermediate_dim, c.hidden_dim});
    if (c.op_mask.down) s.push_back({p + "down.proj", c.hidden_dim, c.intermediate_dim});
  }
  for (std::size_t i = 1; i <= c.num_experts; ++i) {
    const std::string p = "expert." + std::to_string(i) + ".";
    if (c.op_mask.up) s.push_back({p + "up.latent", c.intermediate_dim, c.intermediate_dim});
    else s.push_back({p + "up.weight", c.intermediate_dim, c.hidden_dim});
    if (c.op_mask.gate) s.push_back({p + "gate.latent", c.intermediate_dim, c.intermediate_dim});
    else s.push_back({p + "gate.weight", c.intermediate_dim, c.hidden_dim});
    if (c.op_mask.down) s.push_back({p + "down.latent", c.intermediate_dim, c.intermediate_dim});
    else s.push_back({p + "down.weight", c.hidden_dim, c.intermediate_dim});
  }
  return s;
}

}  // namespace detail

/// Serialized representation of either layer kind.
struct LoadedModel {
  AnyLayer layer;
  Dtype dtype = Dtype::kF32;
};

namespace detail {

inline std::string serialize(const AnyLayer& layer, Dtype dtype) {
  const bool is_moe = std::holds_alternative<MoeLayer>(layer);

  std::vector<SchemaEntry> schema;
  std::vector<const Matrix*> tensors;
  std::uint32_t n, m, N, top_k, group_size = 0;
  std::uint8_t mask_bits = 0;
  Activation act;

  if (is_moe) {
    const MoeLayer& l = std::get<MoeLayer>(layer);
    const MoeConfig& c = l.config();
    schema = moe_schema(c);
    n = static_cast<std::uint32_t>(c.hidden_dim);
    m = static_cast<std::uint32_t>(c.intermediate_dim);
    N = static_cast<std::uint32_t>(c.num_experts);
    top_k = static_cast<std::uint32_t>(c.top_k);
    act = c.activation;
    tensors.push_back(&l.router().w_router);
    for (const ExpertWeights& e : l.experts()) {
      tensors.push_back(&e.w_up);
      tensors.push_back(&e.w_gate);
      tensors.push_back(&e.w_down);
    }
  } else {
    const MolaeLayer& l = std::get<MolaeLayer>(layer);
    const MolaeConfig& c = l.config();
    schema = molae_schema(c);
    n = static_cast<std::uint32_t>(c.hidden_dim);
    m = static_cast<std::uint32_t>(c.intermediate_dim);
    N = static_cast<std::uint32_t>(c.num_experts);
    top_k = static_cast<std::uint32_t>(c.top_k);
    group_size = static_cast<std::uint32_t>(c.group_size);
    mask_bits = c.op_mask.bits();
    act = c.activation;
    tensors.push_back(&l.router().w_router);
    for (const LatentGroup& g : l.groups()) {
      if (g.b_up) tensors.push_back(&*g.b_up);
      if (g.b_gate) tensors.push_back(&*g.b_gate);
      if (g.b_down) tensors.push_back(&*g.b_down);
    }
    for (std::size_t i = 0; i < c.num_experts; ++i) {
      const LatentExpert& le = l.latent_experts()[i];
      const DenseOperators& de = l.dense_experts()[i];
      if (c.op_mask.up) tensors.push_back(&*le.a_up);
      else tensors.push_back(&*de.w_up);
      if (c.op_mask.gate) tensors.push_back(&*le.a_gate);
      else tensors.push_back(&*de.w_gate);
      if (c.op_mask.down) tensors.push_back(&*le.a_down);
      else tensors.push_back(&*de.w_down);
    }
  }

  std::string out;
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kFormatVersion));
  out.push_back(is_moe ? 0 : 1);
  out.push_back(static_cast<char>(act));
  out.push_back(static_cast<char>(dtype));
  put_u32(out, n);
  put_u32(out, m);
  put_u32(out, N);
  put_u32(out, top_k);
  put_u32(out, group_size);
  out.push_back(static_cast<char>(mask_bits));
  out.append(3, '\0');
  put_u32(out, static_cast<std::uint32_t>(schema.size()));

  const std::size_t elem = dtype == Dtype::kF32 ? 4 : 8;
  std::uint64_t offset = 0;
  for (std::size_t t = 0; t < schema.size(); ++t) {
    put_u16(out, static_cast<std::uint16_t>(schema[t].name.size()));
    out.append(schema[t].name);
    put_u32(out, static_cast<std::uint32_t>(schema[t].rows));
    put_u32(out, static_cast<std::uint32_t>(schema[t].cols));
    put_u64(out, offset);
    offset += static_cast<std::uint64_t>(schema[t].rows) * schema[t].cols * elem;
  }
  for (std::size_t t = 0; t < schema.size(); ++t) append_values(out, *tensors[t], dtype);
  return out;
}

}  // namespace detail

/// Writes the layer to a single file, atomically (temp file + rename).
inline void save(const AnyLayer& layer, const std::string& path, Dtype dtype = Dtype::kF32) {
  const std::string bytes = detail::serialize(layer, dtype);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("save: cannot open '" + tmp + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("save: short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("save: cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

/// Reads a container back. Rejects bad magic, unknown versions, truncation,
/// schema or shape deviations, overlapping offsets and non-finite payloads,
/// each with the byte offset of the problem.
inline LoadedModel load(const std::string& path) {
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    bytes = ss.str();
  }
  detail::Reader r(bytes, path);

  const std::string magic = r.str(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw FormatError(path + ": bad magic (not a model container)", 0);
  const std::uint8_t version = r.u8("version");
  if (version != kFormatVersion)
    throw FormatError(path + ": unsupported format version " + std::to_string(version), 4);
  const std::uint8_t kind = r.u8("layer kind");
  if (kind > 1) throw FormatError(path + ": unknown layer kind " + std::to_string(kind), 5);
  const std::uint8_t act_id = r.u8("activation");
  if (act_id > 2) throw FormatError(path + ": unknown activation id " + std::to_string(act_id), 6);
  const std::uint8_t dtype_id = r.u8("dtype");
  if (dtype_id != 4 && dtype_id != 8)
    throw FormatError(path + ": unknown dtype " + std::to_string(dtype_id), 7);
  const Dtype dtype = static_cast<Dtype>(dtype_id);

  const std::uint32_t n = r.u32("hidden dim");
  const std::uint32_t m = r.u32("intermediate dim");
  const std::uint32_t N = r.u32("expert count");
  const std::uint32_t top_k = r.u32("top_k");
  const std::uint32_t group_size = r.u32("group size");
  const std::uint8_t mask_bits = r.u8("op mask");
  r.str(3, "reserved");

  if (n == 0 || m == 0 || N == 0) throw FormatError(path + ": zero dimension in header", 8);
  if (top_k == 0 || top_k > N)
    throw FormatError(path + ": top_k " + std::to_string(top_k) + " outside [1, N]", 20);
  if (kind == 1 && (group_size == 0 || group_size > N))
    throw FormatError(path + ": group size " + std::to_string(group_size) + " outside [1, N]",
                      24);
  if (mask_bits > 7) throw FormatError(path + ": invalid op mask bits", 28);

  // Expected schema from the config, checked before the table is read so a
  // corrupt tensor count cannot drive allocations.
  std::vector<detail::SchemaEntry> schema;
  MoeConfig moe_cfg;
  MolaeConfig molae_cfg;
  if (kind == 0) {
    moe_cfg = MoeConfig{n, m, N, top_k, static_cast<Activation>(act_id)};
    schema = detail::moe_schema(moe_cfg);
  } else {
    molae_cfg = MolaeConfig{n,          m,
                            N,          top_k,
                            group_size, OpMask::from_bits(mask_bits),
                            static_cast<Activation>(act_id)};
    schema = detail::molae_schema(molae_cfg);
  }

  const std::uint32_t tensor_count = r.u32("tensor count");
  if (tensor_count != schema.size())
    throw FormatError(path + ": expected " + std::to_string(schema.size()) + " tensors, found " +
                          std::to_string(tensor_count),
                      32);

  std::vector<TensorEntry> table(tensor_count);
  for (TensorEntry& e : table) {
    const std::uint16_t len = r.u16("tensor name length");
    e.name = r.str(len, "tensor name");
    e.rows = r.u32("tensor rows");
    e.cols = r.u32("tensor cols");
    e.offset = r.u64("tensor offset");
  }
  const std::size_t elem = dtype == Dtype::kF32 ? 4 : 8;
  std::uint64_t expect_offset = 0;
  for (std::size_t t = 0; t < table.size(); ++t) {
    if (table[t].name != schema[t].name)
      throw FormatError(path + ": tensor " + std::to_string(t) + " is '" + table[t].name +
                            "', expected '" + schema[t].name + "'",
                        36);
    if (table[t].rows != schema[t].rows || table[t].cols != schema[t].cols)
      throw FormatError(path + ": tensor '" + table[t].name + "' has shape " +
                            std::to_string(table[t].rows) + "x" + std::to_string(table[t].cols) +
                            ", expected " + std::to_string(schema[t].rows) + "x" +
                            std::to_string(schema[t].cols),
                        36);
    if (table[t].offset != expect_offset)
      throw FormatError(path + ": tensor '" + table[t].name + "' at offset " +
                            std::to_string(table[t].offset) + ", expected ascending packed " +
                            std::to_string(expect_offset),
                        36);
    expect_offset += static_cast<std::uint64_t>(table[t].rows) * table[t].cols * elem;
  }
  const std::uint64_t payload_start = r.pos();
  if (bytes.size() != payload_start + expect_offset)
    throw FormatError(path + ": payload length " + std::to_string(bytes.size() - payload_start) +
                          " does not match expected " + std::to_string(expect_offset),
                      bytes.size());

  std::vector<Matrix> mats;
  mats.reserve(table.size());
  for (const TensorEntry& e : table) mats.push_back(detail::read_values(r, e, dtype, path));

  if (kind == 0) {
    std::vector<ExpertWeights> experts;
    for (std::size_t i = 0; i < N; ++i)
      experts.push_back(ExpertWeights{std::move(mats[1 + 3 * i]), std::move(mats[2 + 3 * i]),
                                      std::move(mats[3 + 3 * i])});
    return LoadedModel{AnyLayer{MoeLayer(moe_cfg, std::move(experts),
                                         RouterWeights{std::move(mats[0])})},
                       dtype};
  }

  const OpMask mask = molae_cfg.op_mask;
  const std::size_t groups_n = group_count(N, group_size);
  std::vector<LatentGroup> groups(groups_n);
  std::vector<LatentExpert> latents(N);
  std::vector<DenseOperators> denses(N);
  std::size_t at = 1;
  for (std::size_t g = 0; g < groups_n; ++g) {
    if (mask.up) groups[g].b_up = std::move(mats[at++]);
    if (mask.gate) groups[g].b_gate = std::move(mats[at++]);
    if (mask.down) groups[g].b_down = std::move(mats[at++]);
  }
  for (std::size_t i = 0; i < N; ++i) {
    if (mask.up) latents[i].a_up = std::move(mats[at++]);
    else denses[i].w_up = std::move(mats[at++]);
    if (mask.gate) latents[i].a_gate = std::move(mats[at++]);
    else denses[i].w_gate = std::move(mats[at++]);
    if (mask.down) latents[i].a_down = std::move(mats[at++]);
    else denses[i].w_down = std::move(mats[at++]);
  }
  return LoadedModel{AnyLayer{MolaeLayer(molae_cfg, std::move(groups), std::move(latents),
                                         std::move(denses), RouterWeights{std::move(mats[0])})},
                     dtype};
}

}  // namespace molae

#endif  // MOLAE_CONTAINER_HPP
