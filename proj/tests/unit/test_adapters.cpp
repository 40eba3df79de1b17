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

#include <cmath>
#include <cstdio>
#include <vector>

#include "kvc/adapters.hpp"
#include "kvc/errors.hpp"
#include "kvc/ops.hpp"
#include "test_support.hpp"

namespace kvc {
namespace {

using testing::random_tensor;

TEST(LoraLinear, ZeroBLeavesBaseOutput) {
  auto x = random_tensor({3, 6}, 1);
  auto wx = random_tensor({3, 5}, 2);
  auto a = random_tensor({2, 6}, 3);
  auto b = Tensor::zeros({5, 2});
  auto out = lora_linear_apply(wx, x, a, b, 16.0, 2);
  for (std::size_t i = 0; i < wx.numel(); ++i) EXPECT_EQ(out.data()[i], wx.data()[i]);
}

TEST(LoraLinear, RankOneBasisCase) {
  // x = e_1 as a row, A = e_1^T, B = e_1, alpha = r = 1: the delta is e_1.
  Tensor x({1, 3}, {0, 1, 0});
  Tensor wx({1, 3}, {0.5f, -1.0f, 2.0f});
  Tensor a({1, 3}, {0, 1, 0});
  Tensor b({3, 1}, {0, 1, 0});
  auto out = lora_linear_apply(wx, x, a, b, 1.0, 1);
  EXPECT_EQ(std::vector<float>(out.data().begin(), out.data().end()), (std::vector<float>{0.5f, 0.0f, 2.0f}));
}

TEST(LoraLinear, ZeroAlphaIsIdentityOnBaseOutput) {
  auto x = random_tensor({2, 4}, 1);
  auto wx = random_tensor({2, 4}, 2);
  auto out = lora_linear_apply(wx, x, random_tensor({2, 4}, 3), random_tensor({4, 2}, 4), 0.0, 2);
  for (std::size_t i = 0; i < wx.numel(); ++i) EXPECT_EQ(out.data()[i], wx.data()[i]);
}

TEST(LoraLinear, GradientReachesAdaptersOnly) {
  auto x = random_tensor({2, 4}, 1);
  auto w = random_tensor({3, 4}, 2);
  auto a = random_tensor({2, 4}, 3, 1.0, true);
  auto b = random_tensor({3, 2}, 4, 1.0, true);
  backward(ops::sum(lora_linear_apply(ops::linear(x, w), x, a, b, 16.0, 2)));
  EXPECT_TRUE(a.has_grad());
  EXPECT_TRUE(b.has_grad());
  EXPECT_FALSE(w.has_grad());
}

TEST(LoraLinear, ShapeMismatch) {
  EXPECT_THROW(lora_linear_apply(Tensor::zeros({1, 3}), Tensor::zeros({1, 4}), Tensor::zeros({2, 4}),
                                 Tensor::zeros({5, 2}), 1.0, 2),
               DimensionError);
}

TEST(InitAdapters, SameSeedSameParameters) {
  const auto config = ModelConfig::byte_level(32, 2, 4, 64, 4, 128);
  const auto a = init_adapters<float>(config, AdapterConfig{}, 7);
  const auto b = init_adapters<float>(config, AdapterConfig{}, 7);
  const auto na = a.named_tensors();
  const auto nb = b.named_tensors();
  ASSERT_EQ(na.size(), nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) {
    EXPECT_EQ(na[i].name, nb[i].name);
    EXPECT_TRUE(std::equal(na[i].tensor.data().begin(), na[i].tensor.data().end(), nb[i].tensor.data().begin()));
  }
}

TEST(InitAdapters, DifferentSeedsDifferInA) {
  const auto config = ModelConfig::byte_level(32, 2, 4, 64, 4, 128);
  const auto a = init_adapters<float>(config, AdapterConfig{}, 7);
  const auto b = init_adapters<float>(config, AdapterConfig{}, 8);
  const auto& la = a.layers[0].q.a;
  const auto& lb = b.layers[0].q.a;
  EXPECT_FALSE(std::equal(la.data().begin(), la.data().end(), lb.data().begin()));
}

TEST(InitAdapters, BStartsAtZeroAndAIsSmall) {
  const auto config = ModelConfig::byte_level(64, 2, 4, 128, 16, 128);
  const auto adapters = init_adapters<float>(config, AdapterConfig{}, 3);
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& layer : adapters.layers) {
    for (const auto* pair : {&layer.q, &layer.k, &layer.v, &layer.o}) {
      for (const float v : pair->b.data()) EXPECT_EQ(v, 0.0f);
      for (const float v : pair->a.data()) {
        sq += double(v) * v;
        ++n;
      }
    }
  }
  EXPECT_NEAR(std::sqrt(sq / double(n)), 0.02, 0.002);
  EXPECT_EQ(adapters.compressed_embeddings.dims(), (Shape{16, 64}));
  EXPECT_FALSE(adapters.has_trigger());
}

TEST(InitAdapters, TriggerIsOptional) {
  const auto config = ModelConfig::byte_level(32, 1, 4, 64, 4, 128);
  const auto adapters = init_adapters<float>(config, AdapterConfig{8, 16.0, true}, 3);
  ASSERT_TRUE(adapters.has_trigger());
  EXPECT_EQ(adapters.regen_trigger.dims(), (Shape{1, 32}));
}

TEST(InitAdapters, RankAboveWidthIsConfigError) {
  const auto config = ModelConfig::byte_level(16, 1, 2, 32, 4, 128);
  EXPECT_THROW(init_adapters<float>(config, AdapterConfig{17, 16.0, false}, 1), ConfigError);
}

TEST(InitAdapters, EveryAdapterTensorIsTrainable) {
  const auto config = ModelConfig::byte_level(16, 2, 2, 32, 4, 128);
  const auto adapters = init_adapters<float>(config, AdapterConfig{4, 8.0, true}, 1);
  const auto trainables = adapters.trainables();
  EXPECT_EQ(trainables.size(), 2 * 4 * 2 + 2u);
  for (const auto& t : trainables) EXPECT_TRUE(t.requires_grad());
  const auto params = ModelParams<float>::init(config, 1);
  for (const auto& nt : params.named_tensors()) EXPECT_FALSE(nt.tensor.requires_grad()) << nt.name;
}

std::size_t enumerate(const std::vector<NamedTensor<float>>& tensors) {
  std::size_t n = 0;
  for (const auto& nt : tensors) n += nt.tensor.numel();
  return n;
}

TEST(ParamFraction, DeskConfigMatchesEnumeration) {
  const auto config = ModelConfig::byte_level(128, 4, 4, 512, 16, 1024);
  const auto params = ModelParams<float>::init(config, 1);
  for (const bool trigger : {false, true}) {
    const auto adapters = init_adapters<float>(config, AdapterConfig{8, 16.0, trigger}, 1);
    const std::size_t adapter_count = enumerate(adapters.named_tensors());
    const std::size_t base_count = enumerate(params.named_tensors());
    const std::size_t formula = 4 * 4 * 2 * 128 * 8 + 16 * 128 + (trigger ? 128 : 0);
    EXPECT_EQ(adapter_count, formula);
    EXPECT_EQ(base_count, base_scalar_count(config));
    EXPECT_EQ(trainable_param_fraction(params, adapters), double(adapter_count) / double(base_count));
  }
}

TEST(ParamFraction, ZeroRankCountsEmbeddingsOnly) {
  const auto config = ModelConfig::byte_level(128, 4, 4, 512, 16, 1024);
  EXPECT_EQ(adapter_scalar_count(config, 0, false), 16u * 128u);
  EXPECT_DOUBLE_EQ(trainable_param_fraction(config, 0, false), 16.0 * 128.0 / double(base_scalar_count(config)));
}

TEST(ParamFraction, LlamaShapedConfigLandsNearThreeTenthsPercent) {
  ModelConfig config;
  config.vocab_size = 128256;
  config.d_model = 4096;
  config.n_layers = 32;
  config.n_heads = 32;
  config.ffn_dim = 14336;
  config.max_positions = 8192;
  config.k_max = 16;
  config.bos_id = 128000;
  config.eos_id = 128001;
  config.pad_id = 128002;
  config.compressed_base_id = 128003;
  std::size_t best_rank = 1;
  for (std::size_t r = 1; r <= 64; ++r) {
    if (std::abs(trainable_param_fraction(config, r, false) - 0.003) <
        std::abs(trainable_param_fraction(config, best_rank, false) - 0.003)) {
      best_rank = r;
    }
  }
  const double fraction = trainable_param_fraction(config, best_rank, false);
  std::printf("llama-shaped: base %zu scalars, rank %zu, adapters %zu scalars, fraction %.4f%%\n",
              base_scalar_count(config), best_rank, adapter_scalar_count(config, best_rank, false), fraction * 100.0);
  EXPECT_NEAR(fraction, 0.003, 0.0002);
}

}  // namespace
}  // namespace kvc
