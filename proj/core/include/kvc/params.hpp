// Copyright 2026 The kvcompress Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kvc/config.hpp"
#include "kvc/tensor.hpp"

namespace kvc {

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

template <typename T>
struct LayerParams {
  BasicTensor<T> attn_norm;  // [d]
  BasicTensor<T> wq, wk, wv, wo;  // [d x d], [out x in]
  BasicTensor<T> ffn_norm;  // [d]
  BasicTensor<T> w_gate, w_up;  // [ffn x d]
  BasicTensor<T> w_down;  // [d x ffn]
};

// Base model weights. Frozen everywhere except base-model training.
template <typename T>
struct ModelParams {
  ModelConfig config;
  BasicTensor<T> tok_embedding;  // [V x d]
  std::vector<LayerParams<T>> layers;
  BasicTensor<T> final_norm;  // [d]
  BasicTensor<T> lm_head;  // [V x d]

  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  // Stable, serialization-order listing of every tensor.
  std::vector<NamedTensor<T>> named_tensors() const;
  // Rebuilds from a listing produced by named_tensors(); throws FormatError
  // on missing or mis-shaped entries.
  static ModelParams from_named(const ModelConfig& config, const std::vector<NamedTensor<T>>& tensors);

  std::size_t scalar_count() const;
  void set_trainable(bool flag);
  ModelParams clone() const;

  template <typename U>
  ModelParams<U> cast() const {
    std::vector<NamedTensor<U>> out;
    for (const auto& nt : named_tensors()) out.push_back({nt.name, nt.tensor.template cast<U>()});
    return ModelParams<U>::from_named(config, out);
  }
};

// Closed-form count of base-model scalars for a configuration.
std::size_t base_scalar_count(const ModelConfig& config);

}  // namespace kvc
