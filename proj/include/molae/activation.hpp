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
#ifndef MOLAE_ACTIVATION_HPP
#define MOLAE_ACTIVATION_HPP

#include <cmath>
#include <cstdint>
#include <string>

#include "molae/error.hpp"

namespace molae {

enum class Activation : std::uint8_t {
  kSilu = 0,      // x * sigmoid(x), the default gate nonlinearity
  kRelu = 1,
  kIdentity = 2,  // handy for exact hand-checked tests
};

inline double activate(Activation act, double x) {
  switch (act) {
    case Activation::kSilu:
      return x / (1.0 + std::exp(-x));
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kIdentity:
      return x;
  }
  throw ArgumentError("activate: unknown activation id");
}

inline double activate_grad(Activation act, double x) {
  switch (act) {
    case Activation::kSilu: {
      const double sig = 1.0 / (1.0 + std::exp(-x));
      return sig * (1.0 + x * (1.0 - sig));
    }
    case Activation::kRelu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity:
      return 1.0;
  }
  throw ArgumentError("activate_grad: unknown activation id");
}

inline std::string activation_name(Activation act) {
  switch (act) {
    case Activation::kSilu: return "silu";
    case Activation::kRelu: return "relu";
    case Activation::kIdentity: return "identity";
  }
  return "unknown";
}

inline Activation parse_activation(const std::string& name) {
  if (name == "silu") return Activation::kSilu;
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ArgumentError("unknown activation '" + name + "' (expected silu|relu|identity)");
}

}  // namespace molae

#endif  // MOLAE_ACTIVATION_HPP
