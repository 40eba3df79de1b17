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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvc/adapters.hpp"
#include "kvc/config.hpp"
#include "kvc/params.hpp"
#include "kvc/training.hpp"

namespace kvc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class SectionTag : std::uint8_t { kBase = 0, kAdapters = 1, kOptimizer = 2 };

std::string_view section_name(SectionTag tag);

struct CheckpointSection {
  SectionTag tag = SectionTag::kBase;
  std::vector<NamedTensor<float>> tensors;
};

// File layout, all integers little-endian:
//   "KVC1" u32 version u64 meta_len meta_json u32 n_sections
//   per section: u8 tag u32 n_tensors u64 payload_bytes payload
//   per tensor:  u16 name_len name u8 rank u32 dims[rank] f32 values
struct Checkpoint {
  std::string meta_json;
  std::vector<CheckpointSection> sections;

  bool has_section(SectionTag tag) const;
  const CheckpointSection& section(SectionTag tag) const;
};

struct CheckpointMeta {
  ModelConfig model;
  std::optional<AdapterConfig> adapter;
  std::optional<TrainConfig> train;
  std::string base_sha256;
  std::size_t optimizer_step = 0;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
// An empty `only` loads every section; otherwise the rest are skipped.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes, std::span<const SectionTag> only = {});

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path, std::span<const SectionTag> only = {});

// Digest of a section's serialized tensor table.
std::string section_sha256(const CheckpointSection& section);

CheckpointMeta checkpoint_meta(const Checkpoint& checkpoint);

Checkpoint make_checkpoint(const ModelParams<float>& base, const AdapterParams<float>* adapters = nullptr,
                           const OptimizerState* optimizer = nullptr, const TrainConfig* train = nullptr);

ModelParams<float> restore_base(const Checkpoint& checkpoint);
AdapterParams<float> restore_adapters(const Checkpoint& checkpoint);
OptimizerState restore_optimizer(const Checkpoint& checkpoint);

}  // namespace kvc
