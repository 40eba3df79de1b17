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
#include <span>
#include <variant>
#include <vector>

#include "kvc/adapters.hpp"
#include "kvc/config.hpp"
#include "kvc/params.hpp"
#include "kvc/tensor.hpp"

namespace kvc {

template <typename T>
struct LayerKV {
  BasicTensor<T> keys;  // [extent x d], rotary-rotated at their absolute positions
  BasicTensor<T> values;  // [extent x d]
};

// Per-layer keys/values covering absolute positions
// [position_offset, position_offset + extent).
template <typename T>
struct KVCache {
  std::vector<LayerKV<T>> layers;
  std::size_t position_offset = 0;
  std::size_t extent = 0;

  bool empty() const { return extent == 0; }
  std::size_t next_position() const { return position_offset + extent; }
  // Throws ConfigError on layer/width mismatch with the model.
  void validate(const ModelConfig& config) const;
  // Copy cut loose from any autograd graph.
  KVCache detach() const;
};

// Counts (query, key) pairs scored by attention, summed over layers for a
// single head. All heads of a layer see the same pattern.
struct AttentionStats {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::uint64_t pairs = 0;

  std::uint64_t per_head_per_layer() const { return layers ? pairs / layers : 0; }
  std::uint64_t total() const { return pairs * heads; }
  AttentionStats& operator+=(const AttentionStats& other);
};

// What precedes the tokens of a forward pass: nothing, an injected KV cache
// or embedding rows [k x d] that occupy the first k input slots.
template <typename T>
using Prefix = std::variant<std::monostate, KVCache<T>, BasicTensor<T>>;

struct ForwardOptions {
  bool compute_logits = true;
  // Logits are produced for token rows [logits_from, t).
  std::size_t logits_from = 0;
};

template <typename T>
struct ForwardOutput {
  BasicTensor<T> logits;  // [(t - logits_from) x V] over token rows only
  BasicTensor<T> hidden;  // final-norm hidden states for every input row
  KVCache<T> cache;  // prefix (when kv) followed by the new positions
  AttentionStats stats;
};

// Runs rows x[t x d] starting at absolute position `start_position`,
// attending to `cache` first when given. Adapters (encoder role) add LoRA
// deltas to the q/k/v/o projections.
template <typename T>
ForwardOutput<T> forward_embeddings(const ModelParams<T>& params, const AdapterParams<T>* adapters,
                                    const BasicTensor<T>& x, const KVCache<T>* cache, std::size_t start_position,
                                    const ForwardOptions& options = {});

// Token-level forward with an optional prefix. With a KV prefix the first
// token sits at prefix.position_offset + prefix.extent; with an embedding
// prefix the prefix rows take positions 0..k-1 and tokens follow.
template <typename T>
ForwardOutput<T> forward_with_prefix(const ModelParams<T>& params, const AdapterParams<T>* adapters,
                                     std::span<const TokenId> tokens, const Prefix<T>& prefix,
                                     const ForwardOptions& options = {});

struct DecodeOutput {
  std::vector<TokenId> tokens;  // excludes seeds and the stop token
  bool stopped = false;
  AttentionStats stats;
};

// Argmax continuation (lowest id wins ties) with the frozen model. `seed`
// may be empty only when the prefix is an embedding prefix.
template <typename T>
DecodeOutput greedy_decode(const ModelParams<T>& params, const Prefix<T>& prefix, std::span<const TokenId> seed,
                           std::size_t max_len, TokenId stop_id);

TokenId argmax_token(std::span<const float> logits);
TokenId argmax_token(std::span<const double> logits);

}  // namespace kvc
