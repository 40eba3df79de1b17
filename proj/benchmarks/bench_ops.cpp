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

#include <random>
#include <vector>

#include "kvc/ops.hpp"

namespace {

kvc::Tensor random_tensor(kvc::Shape dims, std::uint64_t seed) {
  std::size_t n = 1;
  for (const auto d : dims) n *= d;
  std::vector<float> values(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : values) v = dist(rng);
  return kvc::Tensor(std::move(dims), std::move(values));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1);
  const auto b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kvc::ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_CausalAttention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 128;
  const auto q = random_tensor({t, d}, 3);
  const auto k = random_tensor({t, d}, 4);
  const auto v = random_tensor({t, d}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(kvc::ops::causal_attention(q, k, v, 4, nullptr));
}
BENCHMARK(BM_CausalAttention)->Arg(96)->Arg(480);

void BM_AttentionBackward(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 128;
  auto q = random_tensor({t, d}, 3);
  q.set_requires_grad(true);
  const auto k = random_tensor({t, d}, 4);
  const auto v = random_tensor({t, d}, 5);
  for (auto _ : state) {
    const auto loss = kvc::ops::sum(kvc::ops::causal_attention(q, k, v, 4, nullptr));
    kvc::backward(loss);
    q.zero_grad();
  }
}
BENCHMARK(BM_AttentionBackward)->Arg(96)->Arg(480);

}  // namespace
