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

#include "kvc/config.hpp"

#include <json.hpp>

#include <set>

#include "kvc/errors.hpp"

namespace kvc {

ModelConfig ModelConfig::byte_level(std::size_t d_model, std::size_t n_layers, std::size_t n_heads,
                                    std::size_t ffn_dim, std::size_t k_max, std::size_t max_positions) {
  ModelConfig c;
  c.d_model = d_model;
  c.n_layers = n_layers;
  c.n_heads = n_heads;
  c.ffn_dim = ffn_dim;
  c.k_max = k_max;
  c.max_positions = max_positions;
  c.bos_id = 256;
  c.eos_id = 257;
  c.pad_id = 258;
  c.compressed_base_id = 259;
  c.vocab_size = 259 + k_max;
  return c;
}

TokenId ModelConfig::compressed_id(std::size_t index) const {
  if (index >= k_max) throw RangeError("compressed token index " + std::to_string(index) + " >= k_max");
  return compressed_base_id + static_cast<TokenId>(index);
}

bool ModelConfig::is_special(TokenId id) const {
  if (id == bos_id || id == eos_id || id == pad_id) return true;
  return id >= compressed_base_id && id < compressed_base_id + static_cast<TokenId>(k_max);
}

void ModelConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || ffn_dim == 0 || vocab_size == 0 || max_positions == 0) {
    throw ConfigError("model extents must be positive");
  }
  if (d_model % n_heads != 0) throw ConfigError("d_model must be a multiple of n_heads");
  if (head_dim() % 2 != 0) throw ConfigError("head_dim must be even for rotary positions");
  if (k_max < 1) throw ConfigError("k_max must be at least 1");
  if (rope_theta <= 0 || norm_eps < 0) throw ConfigError("rope_theta must be positive and norm_eps non-negative");
  std::set<TokenId> ids{bos_id, eos_id, pad_id};
  for (std::size_t i = 0; i < k_max; ++i) ids.insert(compressed_base_id + static_cast<TokenId>(i));
  if (ids.size() != 3 + k_max) throw ConfigError("special token ids must be distinct");
  if (*ids.begin() < 0 || static_cast<std::size_t>(*ids.rbegin()) >= vocab_size) {
    throw ConfigError("special token ids must lie inside the vocabulary");
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j{{"vocab_size", vocab_size},
                   {"d_model", d_model},
                   {"n_layers", n_layers},
                   {"n_heads", n_heads},
                   {"ffn_dim", ffn_dim},
                   {"max_positions", max_positions},
                   {"rope_theta", rope_theta},
                   {"norm_eps", norm_eps},
                   {"k_max", k_max},
                   {"bos_id", bos_id},
                   {"eos_id", eos_id},
                   {"pad_id", pad_id},
                   {"compressed_base_id", compressed_base_id}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  ModelConfig c;
  try {
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.max_positions = j.value("max_positions", c.max_positions);
    c.rope_theta = j.value("rope_theta", c.rope_theta);
    c.norm_eps = j.value("norm_eps", c.norm_eps);
    c.k_max = j.value("k_max", c.k_max);
    c.bos_id = j.value("bos_id", c.bos_id);
    c.eos_id = j.value("eos_id", c.eos_id);
    c.pad_id = j.value("pad_id", c.pad_id);
    c.compressed_base_id = j.value("compressed_base_id", c.compressed_base_id);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace kvc
