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

#include "kvc/context_io.hpp"

#include "binary_io.hpp"
#include "kvc/errors.hpp"

namespace kvc {

namespace {
constexpr std::string_view kMagic = "KVCX";
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> serialize_context(const CompressedContext<float>& ctx) {
  detail::ByteWriter w;
  w.raw(kMagic);
  w.u32(kVersion);
  const bool embed = ctx.variant == PrefixVariant::kEmbed;
  const bool has_trigger = embed && ctx.trigger.defined();
  w.u8(embed ? 1 : 0);
  w.u8(has_trigger ? 1 : 0);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(ctx.k));
  w.u32(static_cast<std::uint32_t>(ctx.source_length));
  w.u32(static_cast<std::uint32_t>(ctx.position_offset));
  if (embed) {
    w.u32(0);
    w.u32(static_cast<std::uint32_t>(ctx.embed.dim(1)));
    w.f32_array(ctx.embed.data());
    if (has_trigger) w.f32_array(ctx.trigger.data());
  } else {
    if (ctx.kv.layers.empty()) throw ContractError("serialize_context: kv context without layers");
    w.u32(static_cast<std::uint32_t>(ctx.kv.layers.size()));
    w.u32(static_cast<std::uint32_t>(ctx.kv.layers.front().keys.dim(1)));
    for (const auto& layer : ctx.kv.layers) {
      w.f32_array(layer.keys.data());
      w.f32_array(layer.values.data());
    }
  }
  return w.take();
}

CompressedContext<float> deserialize_context(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "compressed context");
  if (r.raw(4) != kMagic) r.fail("bad magic");
  if (const auto version = r.u32(); version != kVersion) r.fail("unsupported version " + std::to_string(version));
  const auto variant = r.u8();
  const bool has_trigger = r.u8() != 0;
  r.u16();
  if (variant > 1) r.fail("unknown variant tag " + std::to_string(variant));
  CompressedContext<float> ctx;
  ctx.variant = variant == 0 ? PrefixVariant::kKv : PrefixVariant::kEmbed;
  ctx.k = r.u32();
  ctx.source_length = r.u32();
  ctx.position_offset = r.u32();
  const std::size_t n_layers = r.u32();
  const std::size_t d = r.u32();
  if (ctx.k == 0 || d == 0) r.fail("k and d_model must be positive");
  if (ctx.variant == PrefixVariant::kEmbed) {
    ctx.embed = Tensor({ctx.k, d}, r.f32_array(ctx.k * d));
    if (has_trigger) ctx.trigger = Tensor({1, d}, r.f32_array(d));
  } else {
    if (n_layers == 0) r.fail("kv context without layers");
    ctx.kv.position_offset = ctx.position_offset;
    ctx.kv.extent = ctx.k;
    for (std::size_t l = 0; l < n_layers; ++l) {
      auto keys = Tensor({ctx.k, d}, r.f32_array(ctx.k * d));
      auto values = Tensor({ctx.k, d}, r.f32_array(ctx.k * d));
      ctx.kv.layers.push_back({std::move(keys), std::move(values)});
    }
  }
  if (r.remaining() != 0) r.fail("trailing bytes");
  return ctx;
}

void save_context(const std::string& path, const CompressedContext<float>& ctx) {
  detail::write_file_bytes(path, serialize_context(ctx.detach()));
}

CompressedContext<float> load_context(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  return deserialize_context(bytes);
}

}  // namespace kvc
