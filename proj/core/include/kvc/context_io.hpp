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
#include <string>
#include <vector>

#include "kvc/compressor.hpp"

namespace kvc {

// Binary container for a CompressedContext, all fields little-endian:
//   "KVCX" | u32 version=1 | u8 variant (0 kv, 1 embed) | u8 has_trigger |
//   u16 reserved | u32 k | u32 l | u32 offset | u32 n_layers | u32 d_model |
//   kv:    per layer, keys[k*d] then values[k*d] as f32
//   embed: rows[k*d] then trigger[d] when has_trigger (n_layers is 0)
std::vector<std::uint8_t> serialize_context(const CompressedContext<float>& ctx);
CompressedContext<float> deserialize_context(std::span<const std::uint8_t> bytes);

void save_context(const std::string& path, const CompressedContext<float>& ctx);
CompressedContext<float> load_context(const std::string& path);

}  // namespace kvc
