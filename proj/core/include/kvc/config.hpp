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
#include <string>
#include <string_view>

#include "kvc/tensor.hpp"

namespace kvc {

// Architecture of the frozen base model. Token ids 0..255 are raw bytes;
// the special ids follow.
struct ModelConfig {
  std::size_t vocab_size = 275;
  std::size_t d_model = 128;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 512;
  std::size_t max_positions = 1024;
  double rope_theta = 10000.0;
  double norm_eps = 1e-5;
  std::size_t k_max = 16;
  TokenId bos_id = 256;
  TokenId eos_id = 257;
  TokenId pad_id = 258;
  TokenId compressed_base_id = 259;

  // Byte vocabulary followed by [BOS], [EOS], [PAD] and k_max compressed ids.
  static ModelConfig byte_level(std::size_t d_model, std::size_t n_layers, std::size_t n_heads, std::size_t ffn_dim,
                                std::size_t k_max = 16, std::size_t max_positions = 1024);

  std::size_t head_dim() const { return d_model / n_heads; }
  // Id of compressed token c_{index+1}.
  TokenId compressed_id(std::size_t index) const;
  bool is_special(TokenId id) const;

  // Throws ConfigError when an invariant is violated.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace kvc
