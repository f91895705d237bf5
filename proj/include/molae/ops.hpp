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
#ifndef MOLAE_OPS_HPP
#define MOLAE_OPS_HPP

#include <array>
#include <cstdint>
#include <sstream>
#include <string>

#include "molae/error.hpp"

namespace molae {

/// The three linear operators of a gated feed-forward expert.
enum class Op : std::uint8_t { kUp = 0, kGate = 1, kDown = 2 };

inline constexpr std::array<Op, 3> kAllOps{Op::kUp, Op::kGate, Op::kDown};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kUp: return "up";
    case Op::kGate: return "gate";
    case Op::kDown: return "down";
  }
  return "?";
}

/// Which operators use the factored latent form. Operators outside the mask
/// stay dense per-expert matrices.
struct OpMask {
  bool up = false;
  bool gate = false;
  bool down = false;

  static OpMask all() { return {true, true, true}; }
  static OpMask none() { return {false, false, false}; }

  bool contains(Op op) const {
    switch (op) {
      case Op::kUp: return up;
      case Op::kGate: return gate;
      case Op::kDown: return down;
    }
    return false;
  }

  int count() const { return (up ? 1 : 0) + (gate ? 1 : 0) + (down ? 1 : 0); }
  bool empty() const { return count() == 0; }

  std::uint8_t bits() const {
    return static_cast<std::uint8_t>((up ? 1 : 0) | (gate ? 2 : 0) | (down ? 4 : 0));
  }

  static OpMask from_bits(std::uint8_t b) {
    if (b > 7) throw ArgumentError("op mask: invalid bit pattern");
    return {(b & 1) != 0, (b & 2) != 0, (b & 4) != 0};
  }

  bool operator==(const OpMask& o) const {
    return up == o.up && gate == o.gate && down == o.down;
  }
};

inline std::string op_mask_to_string(const OpMask& mask) {
  std::string s;
  for (Op op : kAllOps) {
    if (!mask.contains(op)) continue;
    if (!s.empty()) s += ',';
    s += op_name(op);
  }
  return s.empty() ? "none" : s;
}

/// Parses "up,gate,down" style lists; "none" and "" give the empty mask,
/// "all" gives the full mask.
inline OpMask parse_op_mask(const std::string& text) {
  if (text.empty() || text == "none") return OpMask::none();
  if (text == "all") return OpMask::all();
  OpMask mask;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "up") mask.up = true;
    else if (item == "gate") mask.gate = true;
    else if (item == "down") mask.down = true;
    else throw ArgumentError("op mask: unknown operator '" + item + "'");
  }
  return mask;
}

}  // namespace molae

#endif  // MOLAE_OPS_HPP
