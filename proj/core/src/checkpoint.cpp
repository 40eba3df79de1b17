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

#include "kvc/checkpoint.hpp"

#include <json.hpp>

#include <algorithm>

#include "binary_io.hpp"
#include "kvc/errors.hpp"
#include "kvc/sha256.hpp"

namespace kvc {

namespace {

constexpr std::string_view kMagic = "KVC1";

void write_tensors(detail::ByteWriter& w, const CheckpointSection& section) {
  for (const auto& nt : section.tensors) {
    if (nt.name.size() > 0xFFFF) throw FormatError("tensor name too long: " + nt.name.substr(0, 32));
    w.u16(static_cast<std::uint16_t>(nt.name.size()));
    w.raw(nt.name);
    w.u8(static_cast<std::uint8_t>(nt.tensor.rank()));
    for (const auto d : nt.tensor.dims()) w.u32(static_cast<std::uint32_t>(d));
    w.f32_array(nt.tensor.data());
  }
}

std::vector<std::uint8_t> section_payload(const CheckpointSection& section) {
  detail::ByteWriter w;
  write_tensors(w, section);
  return w.take();
}

SectionTag checked_tag(detail::ByteReader& r) {
  const auto tag = r.u8();
  if (tag > static_cast<std::uint8_t>(SectionTag::kOptimizer)) r.fail("unknown section tag " + std::to_string(tag));
  return static_cast<SectionTag>(tag);
}

std::vector<NamedTensor<float>> read_tensors(detail::ByteReader& r, std::uint32_t count) {
  std::vector<NamedTensor<float>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.u16();
    std::string name = r.raw(name_len);
    const auto rank = r.u8();
    if (rank == 0) r.fail("tensor '" + name + "' has rank 0");
    Shape dims(rank);
    std::size_t numel = 1;
    for (auto& d : dims) {
      d = r.u32();
      if (d == 0) r.fail("tensor '" + name + "' has a zero extent");
      numel *= d;
    }
    if (numel > r.remaining() / 4) r.fail("tensor '" + name + "' runs past the end of the file");
    out.push_back({std::move(name), Tensor(std::move(dims), r.f32_array(numel))});
  }
  return out;
}

nlohmann::json parse_meta_json(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
}

}  // namespace

std::string_view section_name(SectionTag tag) {
  switch (tag) {
    case SectionTag::kBase:
      return "base";
    case SectionTag::kAdapters:
      return "adapters";
    default:
      return "optimizer";
  }
}

bool Checkpoint::has_section(SectionTag tag) const {
  return std::any_of(sections.begin(), sections.end(), [&](const auto& s) { return s.tag == tag; });
}

const CheckpointSection& Checkpoint::section(SectionTag tag) const {
  for (const auto& s : sections) {
    if (s.tag == tag) return s;
  }
  throw MissingArtifactError("checkpoint has no " + std::string(section_name(tag)) + " section");
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
  detail::ByteWriter w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  w.u64(checkpoint.meta_json.size());
  w.raw(checkpoint.meta_json);
  w.u32(static_cast<std::uint32_t>(checkpoint.sections.size()));
  for (const auto& section : checkpoint.sections) {
    const auto payload = section_payload(section);
    w.u8(static_cast<std::uint8_t>(section.tag));
    w.u32(static_cast<std::uint32_t>(section.tensors.size()));
    w.u64(payload.size());
    w.append(payload);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes, std::span<const SectionTag> only) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.raw(kMagic.size()) != kMagic) {
    throw FormatError("checkpoint: bad magic at byte offset 0");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ") at byte offset 4");
  }
  const auto meta_len = r.u64();
  if (meta_len > r.remaining()) r.fail("metadata length " + std::to_string(meta_len) + " exceeds file size");
  Checkpoint out;
  out.meta_json = r.raw(meta_len);
  const auto meta = parse_meta_json(out.meta_json);
  const auto n_sections = r.u32();
  for (std::uint32_t s = 0; s < n_sections; ++s) {
    const SectionTag tag = checked_tag(r);
    const auto n_tensors = r.u32();
    const auto payload_bytes = r.u64();
    if (payload_bytes > r.remaining()) r.fail("section payload exceeds file size");
    const bool wanted = only.empty() || std::find(only.begin(), only.end(), tag) != only.end();
    if (!wanted) {
      r.skip(payload_bytes);
      continue;
    }
    detail::ByteReader section_reader(r.view(payload_bytes), "checkpoint " + std::string(section_name(tag)) + " section");
    CheckpointSection section{tag, read_tensors(section_reader, n_tensors)};
    if (section_reader.remaining() != 0) section_reader.fail("trailing bytes in section");
    if (tag == SectionTag::kBase && meta.contains("base_sha256") &&
        meta["base_sha256"].get<std::string>() != section_sha256(section)) {
      throw FormatError("checkpoint: base section digest does not match the recorded hash");
    }
    out.sections.push_back(std::move(section));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after the last section");
  return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  detail::write_file_bytes(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path, std::span<const SectionTag> only) {
  return deserialize_checkpoint(detail::read_file_bytes(path), only);
}

std::string section_sha256(const CheckpointSection& section) { return sha256_hex(section_payload(section)); }

CheckpointMeta checkpoint_meta(const Checkpoint& checkpoint) {
  const auto meta = parse_meta_json(checkpoint.meta_json);
  CheckpointMeta out;
  try {
    out.model = ModelConfig::from_json(meta.at("model").dump());
    if (meta.contains("adapter")) {
      const auto& a = meta["adapter"];
      out.adapter = AdapterConfig{a.at("rank").get<std::size_t>(), a.at("alpha").get<double>(),
                                  a.at("regen_trigger").get<bool>()};
    }
    if (meta.contains("train")) out.train = TrainConfig::from_json(meta["train"].dump());
    out.base_sha256 = meta.value("base_sha256", std::string());
    out.optimizer_step = meta.value("optimizer_step", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  return out;
}

Checkpoint make_checkpoint(const ModelParams<float>& base, const AdapterParams<float>* adapters,
                           const OptimizerState* optimizer, const TrainConfig* train) {
  Checkpoint ckpt;
  ckpt.sections.push_back({SectionTag::kBase, base.named_tensors()});
  nlohmann::json meta;
  meta["format"] = "kvcompress";
  meta["model"] = nlohmann::json::parse(base.config.to_json());
  meta["base_sha256"] = section_sha256(ckpt.sections.back());
  if (adapters != nullptr) {
    ckpt.sections.push_back({SectionTag::kAdapters, adapters->named_tensors()});
    meta["adapter"] = {{"rank", adapters->rank}, {"alpha", adapters->alpha}, {"regen_trigger", adapters->has_trigger()}};
  }
  if (optimizer != nullptr && optimizer->step > 0) {
    CheckpointSection section{SectionTag::kOptimizer, {}};
    for (std::size_t i = 0; i < optimizer->first_moment.size(); ++i) {
      const auto n = optimizer->first_moment[i].size();
      section.tensors.push_back({"m." + std::to_string(i), Tensor({n}, optimizer->first_moment[i])});
      section.tensors.push_back({"v." + std::to_string(i), Tensor({n}, optimizer->second_moment[i])});
    }
    ckpt.sections.push_back(std::move(section));
    meta["optimizer_step"] = optimizer->step;
  }
  if (train != nullptr) meta["train"] = nlohmann::json::parse(train->to_json());
  ckpt.meta_json = meta.dump();
  return ckpt;
}

ModelParams<float> restore_base(const Checkpoint& checkpoint) {
  const auto meta = checkpoint_meta(checkpoint);
  return ModelParams<float>::from_named(meta.model, checkpoint.section(SectionTag::kBase).tensors);
}

AdapterParams<float> restore_adapters(const Checkpoint& checkpoint) {
  const auto meta = checkpoint_meta(checkpoint);
  if (!meta.adapter) throw MissingArtifactError("checkpoint has no adapter configuration");
  return AdapterParams<float>::from_named(meta.model, *meta.adapter, checkpoint.section(SectionTag::kAdapters).tensors);
}

OptimizerState restore_optimizer(const Checkpoint& checkpoint) {
  const auto meta = checkpoint_meta(checkpoint);
  OptimizerState state;
  state.step = meta.optimizer_step;
  const auto& tensors = checkpoint.section(SectionTag::kOptimizer).tensors;
  if (tensors.size() % 2 != 0) throw FormatError("optimizer section must hold moment pairs");
  for (std::size_t i = 0; i < tensors.size(); i += 2) {
    const auto m = tensors[i].tensor.data();
    const auto v = tensors[i + 1].tensor.data();
    state.first_moment.emplace_back(m.begin(), m.end());
    state.second_moment.emplace_back(v.begin(), v.end());
  }
  return state;
}

}  // namespace kvc
