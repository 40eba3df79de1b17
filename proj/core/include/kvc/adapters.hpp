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
#include "kvc/params.hpp"
#include "kvc/tensor.hpp"

namespace kvc {

struct AdapterConfig {
  std::size_t rank = 8;
  double alpha = 16.0;
  // Trainable regeneration trigger used by the embedding-prefix baseline.
  bool regen_trigger = false;
};

template <typename T>
struct LoraPair {
  BasicTensor<T> a;  // [r x d_in]
  BasicTensor<T> b;  // [d_out x r]
};

template <typename T>
struct LoraLayer {
  LoraPair<T> q, k, v, o;
};

// The complete trainable parameter set: LoRA deltas on the encoder's
// attention projections, embeddings of the compressed tokens and the
// optional regeneration trigger.
template <typename T>
struct AdapterParams {
  std::size_t rank = 0;
  double alpha = 0.0;
  std::vector<LoraLayer<T>> layers;
  BasicTensor<T> compressed_embeddings;  // [k_max x d]
  BasicTensor<T> regen_trigger;  // [1 x d], undefined unless enabled

  T scaling() const { return static_cast<T>(alpha / static_cast<double>(rank)); }
  bool has_trigger() const { return regen_trigger.defined(); }

  std::vector<NamedTensor<T>> named_tensors() const;
  static AdapterParams from_named(const ModelConfig& config, const AdapterConfig& adapter_config,
                                  const std::vector<NamedTensor<T>>& tensors);
  std::vector<BasicTensor<T>> trainables() const;
  std::size_t scalar_count() const;
  void zero_grad() const;
  AdapterParams clone() const;

  template <typename U>
  AdapterParams<U> cast(const ModelConfig& config) const {
    std::vector<NamedTensor<U>> out;
    for (const auto& nt : named_tensors()) out.push_back({nt.name, nt.tensor.template cast<U>()});
    return AdapterParams<U>::from_named(config, AdapterConfig{rank, alpha, has_trigger()}, out);
  }
};

// A ~ N(0, 0.02), B = 0, compressed embeddings (and trigger) ~ N(0, 0.02).
// Throws ConfigError when rank is 0 or exceeds d_model.
template <typename T = float>
AdapterParams<T> init_adapters(const ModelConfig& config, const AdapterConfig& adapter_config, std::uint64_t seed);

// wx + (alpha / rank) * B (A x), with x and wx as row batches.
template <typename T>
BasicTensor<T> lora_linear_apply(const BasicTensor<T>& wx, const BasicTensor<T>& x, const BasicTensor<T>& a,
                                 const BasicTensor<T>& b, double alpha, std::size_t rank);

// 4 projections * L layers * (r*d + d*r) + k_max*d (+ d with a trigger).
// Rank 0 is accepted here to describe the embeddings-only boundary.
std::size_t adapter_scalar_count(const ModelConfig& config, std::size_t rank, bool regen_trigger);

// adapter scalars / base scalars.
double trainable_param_fraction(const ModelConfig& config, std::size_t rank, bool regen_trigger);

template <typename T>
double trainable_param_fraction(const ModelParams<T>& params, const AdapterParams<T>& adapters) {
  return trainable_param_fraction(params.config, adapters.rank, adapters.has_trigger());
}

}  // namespace kvc
