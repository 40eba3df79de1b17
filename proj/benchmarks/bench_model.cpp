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

#include <benchmark/benchmark.h>

#include <vector>

#include "kvc/compressor.hpp"
#include "kvc/data.hpp"
#include "kvc/tokenizer.hpp"
#include "kvc/training.hpp"

namespace {

struct Fixture {
  kvc::ModelConfig config = kvc::ModelConfig::byte_level(128, 4, 4, 512);
  kvc::ModelParams<float> params = kvc::ModelParams<float>::init(config, 1);
  kvc::AdapterParams<float> adapters = kvc::init_adapters<float>(config, kvc::AdapterConfig{}, 2);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

std::vector<kvc::TokenId> text_of_length(std::size_t n) {
  std::vector<kvc::TokenId> out;
  const std::string base = "Pibofebe is 3768 km from Zigenido. Pibofebe is a garden. ";
  while (out.size() < n) out.push_back(static_cast<unsigned char>(base[out.size() % base.size()]));
  return out;
}

void BM_Forward(benchmark::State& state) {
  const auto& f = fixture();
  const auto tokens = text_of_length(static_cast<std::size_t>(state.range(0)));
  kvc::NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kvc::forward_with_prefix(f.params, static_cast<const kvc::AdapterParams<float>*>(nullptr),
                                                      std::span<const kvc::TokenId>(tokens), kvc::Prefix<float>{}));
  }
}
BENCHMARK(BM_Forward)->Arg(96)->Arg(480)->Unit(benchmark::kMillisecond);

void BM_CompressKv(benchmark::State& state) {
  const auto& f = fixture();
  const auto tokens = text_of_length(static_cast<std::size_t>(state.range(0)));
  kvc::NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kvc::compress_kv(f.params, f.adapters, std::span<const kvc::TokenId>(tokens), 16));
  }
}
BENCHMARK(BM_CompressKv)->Arg(96)->Arg(480)->Unit(benchmark::kMillisecond);

void BM_PretrainStep(benchmark::State& state) {
  const auto& f = fixture();
  const auto tokens = text_of_length(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    const auto loss = kvc::pretrain_loss(f.params, f.adapters, std::span<const kvc::TokenId>(tokens), 16,
                                         kvc::PrefixVariant::kKv);
    kvc::backward(loss);
    f.adapters.zero_grad();
  }
}
BENCHMARK(BM_PretrainStep)->Arg(96)->Arg(480)->Unit(benchmark::kMillisecond);

void BM_SyntheticCorpus(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(kvc::build_synthetic_corpus(100, kvc::kDefaultBuckets, 1));
}
BENCHMARK(BM_SyntheticCorpus)->Unit(benchmark::kMillisecond);

}  // namespace
