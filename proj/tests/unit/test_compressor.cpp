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

#include <vector>

#include "kvc/compressor.hpp"
#include "kvc/context_io.hpp"
#include "kvc/errors.hpp"
#include "kvc/metrics.hpp"
#include "kvc/ops.hpp"
#include "kvc/tokenizer.hpp"
#include "test_support.hpp"

namespace kvc {
namespace {

using testing::random_tokens;

struct Fixture {
  ModelConfig config = ModelConfig::byte_level(32, 2, 4, 64, 16, 1024);
  ModelParams<float> params = ModelParams<float>::init(config, 3);
  AdapterParams<float> adapters = init_adapters<float>(config, AdapterConfig{}, 5);
};

bool same_values(const Tensor& a, const Tensor& b) {
  return a.dims() == b.dims() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

TEST(CompressKv, ShapeAndOffset) {
  Fixture f;
  const auto text = random_tokens(96, 1);
  const auto ctx = compress_kv(f.params, f.adapters, text, 1);
  EXPECT_EQ(ctx.variant, PrefixVariant::kKv);
  EXPECT_EQ(ctx.kv.extent, 1u);
  EXPECT_EQ(ctx.kv.position_offset, 96u);
  EXPECT_EQ(ctx.position_offset, 96u);
  EXPECT_EQ(ctx.source_length, 96u);
  ASSERT_EQ(ctx.kv.layers.size(), f.config.n_layers);
  EXPECT_EQ(ctx.kv.layers[0].keys.dims(), (Shape{1, 32}));
}

TEST(CompressKv, ZeroBAdaptersMatchBaseModelCache) {
  Fixture f;
  const auto text = random_tokens(40, 2);
  const std::size_t k = 4;
  const auto ctx = compress_kv(f.params, f.adapters, text, k);
  const auto rows = ops::concat_rows(ops::embedding(f.params.tok_embedding, std::span<const TokenId>(text)),
                                     ops::slice_rows(f.adapters.compressed_embeddings, 0, k));
  const auto base = forward_embeddings(f.params, static_cast<const AdapterParams<float>*>(nullptr), rows,
                                       static_cast<const KVCache<float>*>(nullptr), 0);
  for (std::size_t l = 0; l < f.config.n_layers; ++l) {
    EXPECT_TRUE(same_values(ctx.kv.layers[l].keys, ops::slice_rows(base.cache.layers[l].keys, 40, 44)));
    EXPECT_TRUE(same_values(ctx.kv.layers[l].values, ops::slice_rows(base.cache.layers[l].values, 40, 44)));
  }
}

TEST(CompressKv, Deterministic) {
  Fixture f;
  const auto text = random_tokens(50, 3);
  const auto a = serialize_context(compress_kv(f.params, f.adapters, text, 4).detach());
  const auto b = serialize_context(compress_kv(f.params, f.adapters, text, 4).detach());
  EXPECT_EQ(a, b);
}

TEST(CompressKv, ArgumentErrors) {
  Fixture f;
  const auto text = random_tokens(20, 3);
  EXPECT_THROW(compress_kv(f.params, f.adapters, text, 0), RangeError);
  EXPECT_THROW(compress_kv(f.params, f.adapters, text, 17), RangeError);
  EXPECT_THROW(compress_kv(f.params, f.adapters, std::vector<TokenId>{}, 1), ContractError);
  auto special = text;
  special[3] = f.config.bos_id;
  EXPECT_THROW(compress_kv(f.params, f.adapters, special, 1), ContractError);
  const auto long_text = random_tokens(1020, 4);
  EXPECT_THROW(compress_kv(f.params, f.adapters, long_text, 5), CapacityError);
  EXPECT_NO_THROW(compress_kv(f.params, f.adapters, long_text, 4));
}

TEST(CompressEmbed, ShapeVariantAndDeterminism) {
  Fixture f;
  const auto text = random_tokens(30, 5);
  const auto a = compress_embed(f.params, f.adapters, text, 4);
  const auto b = compress_embed(f.params, f.adapters, text, 4);
  EXPECT_EQ(a.variant, PrefixVariant::kEmbed);
  EXPECT_NE(a.variant, compress_kv(f.params, f.adapters, text, 4).variant);
  EXPECT_EQ(a.embed.dims(), (Shape{4, 32}));
  EXPECT_TRUE(same_values(a.embed, b.embed));
}

TEST(Regenerate, UntrainedAdaptersScoreLow) {
  Fixture f;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto text = tokenize("Velmaro is a comet near Tosiku. It was built in 1843 and has code QX-5521.");
    const auto params = ModelParams<float>::init(f.config, 100 + seed);
    const auto ctx = compress_kv(params, f.adapters, text, 16);
    const auto out = regenerate(params, ctx, text.size() + 8);
    EXPECT_LT(rouge_l_f(out.tokens, text), 0.5);
  }
}

TEST(Regenerate, RepeatsAreIdentical) {
  Fixture f;
  const auto text = random_tokens(40, 8);
  for (const auto variant : {PrefixVariant::kKv, PrefixVariant::kEmbed}) {
    const auto ctx = compress(f.params, f.adapters, text, 4, variant);
    EXPECT_EQ(regenerate(f.params, ctx, 30).tokens, regenerate(f.params, ctx, 30).tokens);
  }
}

TEST(Answer, StopFirstGivesEmptyAnswer) {
  const auto config = ModelConfig::byte_level(16, 1, 2, 32, 4, 256);
  const auto params = testing::rigged_constant_model(config, config.eos_id);
  const auto adapters = init_adapters<float>(config, AdapterConfig{4, 8.0, false}, 1);
  const auto ctx = compress_kv(params, adapters, tokenize("some context"), 2);
  const auto out = answer(params, ctx, qa_prompt("What is it?"), 16);
  EXPECT_TRUE(out.tokens.empty());
  EXPECT_TRUE(out.stopped);
  EXPECT_EQ(detokenize(out.tokens), "");
}

TEST(Answer, EmptyQuestionIsRejected) {
  Fixture f;
  const auto ctx = compress_kv(f.params, f.adapters, random_tokens(10, 1), 1);
  EXPECT_THROW(answer(f.params, ctx, std::vector<TokenId>{}, 4), ContractError);
}

TEST(Answer, QuestionPromptIsQuestionThenSpace) {
  const std::string question = "What type of sheaf gives rise to a cycle premodule?";
  const auto prompt = qa_prompt(question);
  EXPECT_EQ(detokenize(prompt), question + " ");
}

TEST(Answer, InstructPromptCarriesInstruction) {
  const auto prompt = detokenize(full_context_prompt("ctx text", "Why?", true));
  EXPECT_EQ(prompt.rfind("Please finish the extractive question answering task.", 0), 0u);
  EXPECT_NE(prompt.find("ctx text"), std::string::npos);
  EXPECT_EQ(detokenize(full_context_prompt("ctx text", "Why?", false)), "ctx text Why? ");
}

TEST(CompressionRatio, Endpoints) {
  EXPECT_EQ(compression_ratio(480, 1), 480.0);
  EXPECT_EQ(compression_ratio(96, 16), 6.0);
  EXPECT_EQ(compression_ratio(37, 37), 1.0);
  EXPECT_THROW(compression_ratio(10, 0), ContractError);
  Fixture f;
  EXPECT_EQ(compression_ratio(compress_kv(f.params, f.adapters, random_tokens(96, 1), 16)), 6.0);
}

TEST(AttendedPairs, CompressedPrefixCostsLessThanRawContext) {
  const auto config = ModelConfig::byte_level(16, 2, 2, 32, 16, 512);
  const auto params = testing::rigged_constant_model(config, 'x');
  const auto adapters = init_adapters<float>(config, AdapterConfig{4, 8.0, false}, 1);
  const auto context = random_tokens(96, 9);
  const auto question = qa_prompt("Which year?");
  const std::size_t m = question.size();
  const std::size_t n = 6;
  for (const std::size_t k : {1u, 4u, 16u}) {
    const auto ctx = compress_kv(params, adapters, context, k);
    const auto compressed = answer(params, ctx, question, n);
    const auto raw_prefix = forward_with_prefix(params, static_cast<const AdapterParams<float>*>(nullptr), context,
                                                Prefix<float>{});
    const auto raw = greedy_decode(params, Prefix<float>{raw_prefix.cache}, question, n, config.eos_id);
    ASSERT_EQ(compressed.tokens.size(), n);
    ASSERT_EQ(raw.tokens.size(), n);
    auto expected = [&](std::size_t e) {
      std::uint64_t total = 0;
      for (std::size_t i = 1; i <= m; ++i) total += e + i;
      for (std::size_t j = 1; j < n; ++j) total += e + m + j;
      return total;
    };
    EXPECT_EQ(compressed.stats.per_head_per_layer(), expected(k));
    EXPECT_EQ(raw.stats.per_head_per_layer(), expected(context.size()));
    EXPECT_LT(compressed.stats.pairs, raw.stats.pairs);
  }
}

TEST(ContextIo, RoundTripIsByteIdentical) {
  Fixture f;
  auto with_trigger = init_adapters<float>(f.config, AdapterConfig{8, 16.0, true}, 2);
  const auto text = random_tokens(25, 1);
  for (const auto& ctx : {compress_kv(f.params, f.adapters, text, 3), compress_embed(f.params, f.adapters, text, 3),
                          compress_embed(f.params, with_trigger, text, 2)}) {
    const auto bytes = serialize_context(ctx.detach());
    const auto back = deserialize_context(bytes);
    EXPECT_EQ(serialize_context(back), bytes);
    EXPECT_EQ(back.k, ctx.k);
    EXPECT_EQ(back.source_length, 25u);
    EXPECT_EQ(back.position_offset, 25u);
    EXPECT_EQ(back.variant, ctx.variant);
    EXPECT_EQ(regenerate(f.params, back, 12).tokens, regenerate(f.params, ctx, 12).tokens);
  }
}

TEST(ContextIo, CorruptInputIsFormatError) {
  Fixture f;
  auto bytes = serialize_context(compress_kv(f.params, f.adapters, random_tokens(10, 1), 2).detach());
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xFF;
  EXPECT_THROW(deserialize_context(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(deserialize_context(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_context(trailing), FormatError);
}

}  // namespace
}  // namespace kvc
