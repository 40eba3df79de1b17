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


#include <gtest/gtest.h>

#include <filesystem>
#include <vector>

#include "kvc/checkpoint.hpp"
#include "kvc/compressor.hpp"
#include "kvc/errors.hpp"
#include "kvc/sha256.hpp"
#include "test_support.hpp"

namespace kvc {
namespace {

using testing::random_tokens;

struct Saved {
  ModelConfig config = ModelConfig::byte_level(32, 2, 4, 64, 4, 256);
  ModelParams<float> base = ModelParams<float>::init(config, 1);
  AdapterParams<float> adapters = init_adapters<float>(config, AdapterConfig{4, 8.0, true}, 2);
  OptimizerState optimizer;
  TrainConfig train;

  Saved() {
    // Give B non-zero values so adapter restoration is observable.
    for (auto& layer : adapters.layers) {
      for (auto& v : layer.v.b.mutable_data()) v = 0.01f;
    }
    for (const auto& t : adapters.trainables()) {
      optimizer.first_moment.emplace_back(t.numel(), 0.5f);
      optimizer.second_moment.emplace_back(t.numel(), 0.25f);
    }
    optimizer.step = 17;
    train.k = 4;
  }
  Checkpoint full() const { return make_checkpoint(base, &adapters, &optimizer, &train); }
};

TEST(Sha256, KnownDigest) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(std::string_view("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  Saved s;
  const auto bytes = serialize_checkpoint(s.full());
  const auto loaded = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(loaded), bytes);
  const auto meta = checkpoint_meta(loaded);
  EXPECT_EQ(meta.model, s.config);
  ASSERT_TRUE(meta.adapter.has_value());
  EXPECT_EQ(meta.adapter->rank, 4u);
  EXPECT_TRUE(meta.adapter->regen_trigger);
  ASSERT_TRUE(meta.train.has_value());
  EXPECT_EQ(meta.train->k, 4u);
  EXPECT_EQ(meta.optimizer_step, 17u);
}

TEST(Checkpoint, TensorsRestoreBitwise) {
  Saved s;
  const auto loaded = deserialize_checkpoint(serialize_checkpoint(s.full()));
  const auto base = restore_base(loaded);
  const auto a = s.base.named_tensors();
  const auto b = base.named_tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].tensor.dims(), b[i].tensor.dims());
    EXPECT_TRUE(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
  }
  const auto adapters = restore_adapters(loaded);
  const auto x = s.adapters.named_tensors();
  const auto y = adapters.named_tensors();
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_TRUE(std::equal(x[i].tensor.data().begin(), x[i].tensor.data().end(), y[i].tensor.data().begin()));
  }
  const auto opt = restore_optimizer(loaded);
  EXPECT_EQ(opt.step, 17u);
  EXPECT_EQ(opt.first_moment, s.optimizer.first_moment);
  EXPECT_EQ(opt.second_moment, s.optimizer.second_moment);
}

TEST(Checkpoint, FileRoundTrip) {
  Saved s;
  const auto path = (std::filesystem::temp_directory_path() / "kvc_checkpoint_roundtrip.kvc").string();
  save_checkpoint(path, s.full());
  const auto loaded = load_checkpoint(path);
  EXPECT_EQ(serialize_checkpoint(loaded), serialize_checkpoint(s.full()));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), MissingArtifactError);
}

TEST(Checkpoint, CorruptMagicIsRejected) {
  Saved s;
  auto bytes = serialize_checkpoint(s.full());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "KVC1");
  bytes[1] = 'X';
  try {
    deserialize_checkpoint(bytes);
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }
}

TEST(Checkpoint, VersionMismatchIsRejected) {
  Saved s;
  auto bytes = serialize_checkpoint(s.full());
  bytes[4] = 9;
  EXPECT_THROW(deserialize_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, TruncationIsRejectedWithOffset) {
  Saved s;
  const auto bytes = serialize_checkpoint(s.full());
  for (const std::size_t keep : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + keep);
    try {
      deserialize_checkpoint(cut);
      FAIL() << "truncation to " << keep << " accepted";
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
    }
  }
}

TEST(Checkpoint, TamperedBaseFailsDigest) {
  Saved s;
  auto bytes = serialize_checkpoint(make_checkpoint(s.base));
  bytes[bytes.size() - 2] ^= 0x01;
  EXPECT_THROW(deserialize_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, PartialLoadKeepsRequestedSections) {
  Saved s;
  const auto bytes = serialize_checkpoint(s.full());
  const SectionTag only[] = {SectionTag::kAdapters};
  const auto partial = deserialize_checkpoint(bytes, only);
  EXPECT_TRUE(partial.has_section(SectionTag::kAdapters));
  EXPECT_FALSE(partial.has_section(SectionTag::kBase));
  EXPECT_FALSE(partial.has_section(SectionTag::kOptimizer));
  EXPECT_THROW(partial.section(SectionTag::kBase), MissingArtifactError);
  EXPECT_THROW(restore_adapters(deserialize_checkpoint(serialize_checkpoint(make_checkpoint(s.base)))),
               MissingArtifactError);
}

TEST(Checkpoint, AdapterOnlyLoadOntoFreshBaseRuns) {
  Saved s;
  const auto bytes = serialize_checkpoint(s.full());
  const SectionTag only[] = {SectionTag::kAdapters};
  const auto adapters = restore_adapters(deserialize_checkpoint(bytes, only));
  const auto fresh = ModelParams<float>::init(s.config, 99);
  const auto text = random_tokens(30, 3);
  const auto ctx = compress_kv(fresh, adapters, text, 4);
  const auto out = regenerate(fresh, ctx, 8);
  EXPECT_LE(out.tokens.size(), 8u);
  const auto reference = compress_kv(fresh, s.adapters, text, 4);
  EXPECT_TRUE(std::equal(ctx.kv.layers[1].values.data().begin(), ctx.kv.layers[1].values.data().end(),
                         reference.kv.layers[1].values.data().begin()));
}

TEST(Checkpoint, BaseDigestTracksWeights) {
  Saved s;
  const auto a = section_sha256(make_checkpoint(s.base).section(SectionTag::kBase));
  EXPECT_EQ(a, checkpoint_meta(make_checkpoint(s.base)).base_sha256);
  auto other = s.base.clone();
  other.final_norm.mutable_data()[0] += 1.0f;
  EXPECT_NE(section_sha256(make_checkpoint(other).section(SectionTag::kBase)), a);
}

}  // namespace
}  // namespace kvc
