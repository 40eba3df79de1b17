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

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "kvc/adapters.hpp"
#include "kvc/model.hpp"
#include "kvc/params.hpp"

namespace kvc {

enum class PrefixVariant {
  kKv,  // per-layer keys/values of the compressed tokens
  kEmbed,  // final-layer hidden states fed as input embeddings (baseline)
};

std::string_view variant_name(PrefixVariant variant);
PrefixVariant parse_variant(std::string_view name);

// Compressed representation of l source tokens in k slots. For the KV
// variant `kv` holds extent k at positions [l, l + k); for the embedding
// variant `embed` is [k x d] and `trigger`, when present, replaces [BOS]
// as the regeneration trigger.
template <typename T>
struct CompressedContext {
  PrefixVariant variant = PrefixVariant::kKv;
  std::size_t k = 0;
  std::size_t source_length = 0;
  std::size_t position_offset = 0;
  KVCache<T> kv;
  BasicTensor<T> embed;
  BasicTensor<T> trigger;

  Prefix<T> decoder_prefix() const;
  void validate(const ModelConfig& config) const;
  CompressedContext detach() const;
};

// Encodes concat(text, c_1..c_k) with the adapted encoder and keeps the
// per-layer K/V of the k compressed positions. Differentiable with respect
// to the adapters.
template <typename T>
CompressedContext<T> compress_kv(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                                 std::span<const TokenId> text, std::size_t k);

// Baseline: keeps the final-norm hidden states of the compressed positions.
template <typename T>
CompressedContext<T> compress_embed(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                                    std::span<const TokenId> text, std::size_t k);

template <typename T>
CompressedContext<T> compress(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                              std::span<const TokenId> text, std::size_t k, PrefixVariant variant);

// Greedy regeneration from the context, triggered by [BOS] (or the trained
// trigger of the embedding baseline), stopping at [EOS] or max_len.
template <typename T>
DecodeOutput regenerate(const ModelParams<T>& params, const CompressedContext<T>& ctx, std::size_t max_len);

// Greedy answer given the context followed directly by the question.
template <typename T>
DecodeOutput answer(const ModelParams<T>& params, const CompressedContext<T>& ctx, std::span<const TokenId> question,
                    std::size_t max_len);

// Uncompressed reference path: [BOS] context question, optionally wrapped
// in the extractive-QA instruction prompt.
template <typename T>
DecodeOutput answer_full_context(const ModelParams<T>& params, std::string_view context, std::string_view question,
                                 bool instruct, std::size_t max_len);

// Tokens of the full-context QA prompt (without [BOS]).
// Decoder seed for answering from a compressed context: the question and a space.
std::vector<TokenId> qa_prompt(std::string_view question);

std::vector<TokenId> full_context_prompt(std::string_view context, std::string_view question, bool instruct);

double compression_ratio(std::size_t source_length, std::size_t k);

template <typename T>
double compression_ratio(const CompressedContext<T>& ctx) {
  return compression_ratio(ctx.source_length, ctx.k);
}

}  // namespace kvc
