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

#include "kvc/compressor.hpp"

#include <string>

#include "kvc/errors.hpp"
#include "kvc/ops.hpp"
#include "kvc/tokenizer.hpp"

namespace kvc {

namespace {

constexpr std::string_view kInstruction =
    "Please finish the extractive question answering task. Just output the answer. Context: ";

template <typename T>
void check_compress_args(const ModelParams<T>& params, std::span<const TokenId> text, std::size_t k) {
  const ModelConfig& config = params.config;
  if (k < 1 || k > config.k_max) {
    throw RangeError("compress: k=" + std::to_string(k) + " outside [1, " + std::to_string(config.k_max) + "]");
  }
  if (text.empty()) throw ContractError("compress: source text is empty");
  for (const TokenId id : text) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
      throw IndexError("compress: token id " + std::to_string(id) + " outside the vocabulary");
    }
    if (config.is_special(id)) throw ContractError("compress: source text contains special id " + std::to_string(id));
  }
  if (text.size() + k > config.max_positions) {
    throw CapacityError("compress: " + std::to_string(text.size()) + " tokens + " + std::to_string(k) +
                        " compressed tokens exceed max_positions " + std::to_string(config.max_positions));
  }
}

// Encoder pass over concat(text, c_1..c_k); logits are never needed.
template <typename T>
ForwardOutput<T> encode(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                        std::span<const TokenId> text, std::size_t k) {
  check_compress_args(params, text, k);
  if (adapters.compressed_embeddings.dim(0) < k) throw ConfigError("adapters hold fewer compressed embeddings than k");
  const auto text_rows = ops::embedding(params.tok_embedding, text);
  const auto slots = ops::slice_rows(adapters.compressed_embeddings, 0, k);
  ForwardOptions options;
  options.compute_logits = false;
  return forward_embeddings(params, &adapters, ops::concat_rows(text_rows, slots), static_cast<const KVCache<T>*>(nullptr), 0, options);
}

}  // namespace

std::string_view variant_name(PrefixVariant variant) {
  return variant == PrefixVariant::kKv ? "kv" : "embed";
}

PrefixVariant parse_variant(std::string_view name) {
  if (name == "kv") return PrefixVariant::kKv;
  if (name == "embed") return PrefixVariant::kEmbed;
  throw ConfigError("unknown prefix variant '" + std::string(name) + "' (expected kv or embed)");
}

template <typename T>
Prefix<T> CompressedContext<T>::decoder_prefix() const {
  if (variant == PrefixVariant::kKv) return kv;
  return embed;
}

template <typename T>
void CompressedContext<T>::validate(const ModelConfig& config) const {
  if (k < 1 || k > config.k_max) throw FormatError("compressed context: k outside [1, k_max]");
  if (source_length < 1) throw FormatError("compressed context: source length must be positive");
  if (variant == PrefixVariant::kKv) {
    if (kv.extent != k) throw FormatError("compressed context: kv extent differs from k");
    kv.validate(config);
  } else {
    if (!embed.defined() || embed.dims() != Shape{k, config.d_model}) {
      throw FormatError("compressed context: embedding rows must be [k x d_model]");
    }
  }
}

template <typename T>
CompressedContext<T> CompressedContext<T>::detach() const {
  CompressedContext out = *this;
  out.kv = kv.detach();
  if (embed.defined()) out.embed = embed.detach();
  if (trigger.defined()) out.trigger = trigger.detach();
  return out;
}

template <typename T>
CompressedContext<T> compress_kv(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                                 std::span<const TokenId> text, std::size_t k) {
  const auto encoded = encode(params, adapters, text, k);
  const std::size_t l = text.size();
  CompressedContext<T> ctx;
  ctx.variant = PrefixVariant::kKv;
  ctx.k = k;
  ctx.source_length = l;
  ctx.position_offset = l;
  ctx.kv.position_offset = l;
  ctx.kv.extent = k;
  for (const auto& layer : encoded.cache.layers) {
    ctx.kv.layers.push_back({ops::slice_rows(layer.keys, l, l + k), ops::slice_rows(layer.values, l, l + k)});
  }
  return ctx;
}

template <typename T>
CompressedContext<T> compress_embed(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                                    std::span<const TokenId> text, std::size_t k) {
  const auto encoded = encode(params, adapters, text, k);
  const std::size_t l = text.size();
  CompressedContext<T> ctx;
  ctx.variant = PrefixVariant::kEmbed;
  ctx.k = k;
  ctx.source_length = l;
  ctx.position_offset = l;
  ctx.embed = ops::slice_rows(encoded.hidden, l, l + k);
  if (adapters.has_trigger()) ctx.trigger = adapters.regen_trigger;
  return ctx;
}

template <typename T>
CompressedContext<T> compress(const ModelParams<T>& params, const AdapterParams<T>& adapters,
                              std::span<const TokenId> text, std::size_t k, PrefixVariant variant) {
  return variant == PrefixVariant::kKv ? compress_kv(params, adapters, text, k)
                                       : compress_embed(params, adapters, text, k);
}

template <typename T>
DecodeOutput regenerate(const ModelParams<T>& params, const CompressedContext<T>& ctx, std::size_t max_len) {
  ctx.validate(params.config);
  if (ctx.variant == PrefixVariant::kEmbed && ctx.trigger.defined()) {
    const Prefix<T> prefix = ops::concat_rows(ctx.embed, ctx.trigger);
    return greedy_decode(params, prefix, {}, max_len, params.config.eos_id);
  }
  const TokenId seed[] = {params.config.bos_id};
  return greedy_decode(params, ctx.decoder_prefix(), std::span<const TokenId>(seed), max_len, params.config.eos_id);
}

template <typename T>
DecodeOutput answer(const ModelParams<T>& params, const CompressedContext<T>& ctx, std::span<const TokenId> question,
                    std::size_t max_len) {
  ctx.validate(params.config);
  if (question.empty()) throw ContractError("answer: question is empty");
  return greedy_decode(params, ctx.decoder_prefix(), question, max_len, params.config.eos_id);
}

std::vector<TokenId> qa_prompt(std::string_view question) {
  std::string prompt(question);
  prompt.push_back(' ');
  return tokenize(prompt);
}

std::vector<TokenId> full_context_prompt(std::string_view context, std::string_view question, bool instruct) {
  std::string prompt;
  if (instruct) {
    prompt.append(kInstruction);
    prompt.append(context);
    prompt.append(" Question: ");
    prompt.append(question);
    prompt.append(" Answer: ");
  } else {
    prompt.append(context);
    prompt.push_back(' ');
    prompt.append(question);
    prompt.push_back(' ');
  }
  return tokenize(prompt);
}

template <typename T>
DecodeOutput answer_full_context(const ModelParams<T>& params, std::string_view context, std::string_view question,
                                 bool instruct, std::size_t max_len) {
  std::vector<TokenId> seed{params.config.bos_id};
  const auto prompt = full_context_prompt(context, question, instruct);
  seed.insert(seed.end(), prompt.begin(), prompt.end());
  return greedy_decode(params, Prefix<T>{}, seed, max_len, params.config.eos_id);
}

double compression_ratio(std::size_t source_length, std::size_t k) {
  if (k < 1) throw ContractError("compression_ratio: k must be at least 1");
  return static_cast<double>(source_length) / static_cast<double>(k);
}

template struct CompressedContext<float>;
template struct CompressedContext<double>;

#define KVC_INSTANTIATE_COMPRESSOR(T)                                                                             \
  template CompressedContext<T> compress_kv(const ModelParams<T>&, const AdapterParams<T>&,                      \
                                            std::span<const TokenId>, std::size_t);                              \
  template CompressedContext<T> compress_embed(const ModelParams<T>&, const AdapterParams<T>&,                   \
                                               std::span<const TokenId>, std::size_t);                           \
  template CompressedContext<T> compress(const ModelParams<T>&, const AdapterParams<T>&,                         \
                                         std::span<const TokenId>, std::size_t, PrefixVariant);                  \
  template DecodeOutput regenerate(const ModelParams<T>&, const CompressedContext<T>&, std::size_t);             \
  template DecodeOutput answer(const ModelParams<T>&, const CompressedContext<T>&, std::span<const TokenId>,     \
                               std::size_t);                                                                     \
  template DecodeOutput answer_full_context(const ModelParams<T>&, std::string_view, std::string_view, bool,     \
                                            std::size_t);

KVC_INSTANTIATE_COMPRESSOR(float)
KVC_INSTANTIATE_COMPRESSOR(double)

#undef KVC_INSTANTIATE_COMPRESSOR

}  // namespace kvc
