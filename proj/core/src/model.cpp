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

#include "kvc/model.hpp"

#include <numeric>
#include <string>

#include "kvc/errors.hpp"
#include "kvc/ops.hpp"

namespace kvc {

template <typename T>
void KVCache<T>::validate(const ModelConfig& config) const {
  if (layers.size() != config.n_layers) {
    throw ConfigError("kv cache has " + std::to_string(layers.size()) + " layers, model has " +
                      std::to_string(config.n_layers));
  }
  for (const auto& layer : layers) {
    const Shape expected{extent, config.d_model};
    if (layer.keys.dims() != expected || layer.values.dims() != expected) {
      throw ConfigError("kv cache layer shape " + shape_str(layer.keys.dims()) + " does not match " +
                        shape_str(expected));
    }
  }
}

template <typename T>
KVCache<T> KVCache<T>::detach() const {
  KVCache out;
  out.position_offset = position_offset;
  out.extent = extent;
  for (const auto& layer : layers) out.layers.push_back({layer.keys.detach(), layer.values.detach()});
  return out;
}

AttentionStats& AttentionStats::operator+=(const AttentionStats& other) {
  layers = other.layers;
  heads = other.heads;
  pairs += other.pairs;
  return *this;
}

namespace {

template <typename T>
BasicTensor<T> project(const BasicTensor<T>& x, const BasicTensor<T>& w, const AdapterParams<T>* adapters,
                       const LoraPair<T>* lora) {
  auto y = ops::linear(x, w);
  if (adapters == nullptr) return y;
  return lora_linear_apply(y, x, lora->a, lora->b, adapters->alpha, adapters->rank);
}

template <typename T>
TokenId argmax_impl(std::span<const T> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

}  // namespace

TokenId argmax_token(std::span<const float> logits) { return argmax_impl(logits); }
TokenId argmax_token(std::span<const double> logits) { return argmax_impl(logits); }

template <typename T>
ForwardOutput<T> forward_embeddings(const ModelParams<T>& params, const AdapterParams<T>* adapters,
                                    const BasicTensor<T>& x, const KVCache<T>* cache, std::size_t start_position,
                                    const ForwardOptions& options) {
  const ModelConfig& config = params.config;
  if (x.rank() != 2 || x.dim(1) != config.d_model) {
    throw DimensionError("forward: input rows " + shape_str(x.dims()) + " do not match d_model " +
                         std::to_string(config.d_model));
  }
  if (adapters != nullptr && adapters->layers.size() != config.n_layers) {
    throw ConfigError("adapter layer count does not match the model");
  }
  const bool has_cache = cache != nullptr && !cache->empty();
  if (has_cache) {
    cache->validate(config);
    if (start_position != cache->next_position()) {
      throw ContractError("forward: new positions must continue the cache at " +
                          std::to_string(cache->next_position()));
    }
  }
  const std::size_t t = x.dim(0);
  if (start_position + t > config.max_positions) {
    throw RangeError("forward: position " + std::to_string(start_position + t - 1) + " exceeds max_positions " +
                     std::to_string(config.max_positions));
  }
  std::vector<std::size_t> positions(t);
  std::iota(positions.begin(), positions.end(), start_position);

  ForwardOutput<T> out;
  out.stats.layers = config.n_layers;
  out.stats.heads = config.n_heads;
  const T eps = static_cast<T>(config.norm_eps);
  BasicTensor<T> h = x;
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const auto& layer = params.layers[l];
    const LoraLayer<T>* lora = adapters ? &adapters->layers[l] : nullptr;
    const auto attn_in = ops::rms_norm(h, layer.attn_norm, eps);
    auto q = project(attn_in, layer.wq, adapters, lora ? &lora->q : nullptr);
    auto k = project(attn_in, layer.wk, adapters, lora ? &lora->k : nullptr);
    auto v = project(attn_in, layer.wv, adapters, lora ? &lora->v : nullptr);
    q = ops::rope(q, config.n_heads, positions, config.rope_theta);
    k = ops::rope(k, config.n_heads, positions, config.rope_theta);
    if (has_cache) {
      k = ops::concat_rows(cache->layers[l].keys, k);
      v = ops::concat_rows(cache->layers[l].values, v);
    }
    const auto attn = ops::causal_attention(q, k, v, config.n_heads, &out.stats.pairs);
    h = ops::add(h, project(attn, layer.wo, adapters, lora ? &lora->o : nullptr));
    const auto ffn_in = ops::rms_norm(h, layer.ffn_norm, eps);
    const auto gated = ops::mul(ops::silu(ops::linear(ffn_in, layer.w_gate)), ops::linear(ffn_in, layer.w_up));
    h = ops::add(h, ops::linear(gated, layer.w_down));
    out.cache.layers.push_back({k, v});
  }
  out.cache.position_offset = has_cache ? cache->position_offset : start_position;
  out.cache.extent = (has_cache ? cache->extent : 0) + t;
  out.hidden = ops::rms_norm(h, params.final_norm, eps);
  if (options.compute_logits) {
    if (options.logits_from >= t) throw RangeError("forward: logits_from beyond the last row");
    const auto rows = options.logits_from == 0 ? out.hidden : ops::slice_rows(out.hidden, options.logits_from, t);
    out.logits = ops::linear(rows, params.lm_head);
  }
  return out;
}

template <typename T>
ForwardOutput<T> forward_with_prefix(const ModelParams<T>& params, const AdapterParams<T>* adapters,
                                     std::span<const TokenId> tokens, const Prefix<T>& prefix,
                                     const ForwardOptions& options) {
  if (tokens.empty()) throw ContractError("forward: token list is empty");
  const auto embedded = ops::embedding(params.tok_embedding, tokens);
  if (const auto* kv = std::get_if<KVCache<T>>(&prefix)) {
    return forward_embeddings(params, adapters, embedded, kv, kv->next_position(), options);
  }
  if (const auto* rows = std::get_if<BasicTensor<T>>(&prefix)) {
    if (rows->rank() != 2 || rows->dim(1) != params.config.d_model) {
      throw DimensionError("embedding prefix " + shape_str(rows->dims()) + " does not match d_model " +
                           std::to_string(params.config.d_model));
    }
    ForwardOptions shifted = options;
    shifted.logits_from += rows->dim(0);
    return forward_embeddings(params, adapters, ops::concat_rows(*rows, embedded), static_cast<const KVCache<T>*>(nullptr), 0, shifted);
  }
  return forward_embeddings(params, adapters, embedded, static_cast<const KVCache<T>*>(nullptr), 0, options);
}

template <typename T>
DecodeOutput greedy_decode(const ModelParams<T>& params, const Prefix<T>& prefix, std::span<const TokenId> seed,
                           std::size_t max_len, TokenId stop_id) {
  if (max_len < 1) throw ContractError("greedy_decode: max_len must be at least 1");
  NoGradGuard no_grad;
  DecodeOutput out;
  ForwardOutput<T> step;
  if (const auto* rows = std::get_if<BasicTensor<T>>(&prefix); rows != nullptr && seed.empty()) {
    step = forward_embeddings(params, static_cast<const AdapterParams<T>*>(nullptr), *rows, static_cast<const KVCache<T>*>(nullptr), 0,
                              {true, rows->dim(0) - 1});
  } else {
    if (seed.empty()) throw ContractError("greedy_decode: seed tokens required without an embedding prefix");
    step = forward_with_prefix(params, static_cast<const AdapterParams<T>*>(nullptr), seed, prefix,
                               {true, seed.size() - 1});
  }
  out.stats += step.stats;
  while (true) {
    const auto logits = step.logits.data();
    const TokenId next = argmax_token(logits.subspan(logits.size() - params.config.vocab_size));
    if (next == stop_id) {
      out.stopped = true;
      break;
    }
    out.tokens.push_back(next);
    if (out.tokens.size() >= max_len) break;
    const TokenId single[] = {next};
    const auto embedded = ops::embedding(params.tok_embedding, std::span<const TokenId>(single));
    step = forward_embeddings(params, static_cast<const AdapterParams<T>*>(nullptr), embedded, &step.cache,
                              step.cache.next_position());
    out.stats += step.stats;
  }
  return out;
}

template struct KVCache<float>;
template struct KVCache<double>;

#define KVC_INSTANTIATE_MODEL(T)                                                                                   \
  template ForwardOutput<T> forward_embeddings(const ModelParams<T>&, const AdapterParams<T>*,                    \
                                               const BasicTensor<T>&, const KVCache<T>*, std::size_t,            \
                                               const ForwardOptions&);                                            \
  template ForwardOutput<T> forward_with_prefix(const ModelParams<T>&, const AdapterParams<T>*,                   \
                                                std::span<const TokenId>, const Prefix<T>&, const ForwardOptions&); \
  template DecodeOutput greedy_decode(const ModelParams<T>&, const Prefix<T>&, std::span<const TokenId>,          \
                                      std::size_t, TokenId);

KVC_INSTANTIATE_MODEL(float)
KVC_INSTANTIATE_MODEL(double)

#undef KVC_INSTANTIATE_MODEL

}  // namespace kvc
