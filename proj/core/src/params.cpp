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

#include "kvc/params.hpp"

#include <map>
#include <random>
#include <utility>

#include "kvc/errors.hpp"

namespace kvc {

namespace {

template <typename T>
BasicTensor<T> normal_tensor(Shape dims, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> values(shape_numel(dims));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return BasicTensor<T>(std::move(dims), std::move(values));
}

}  // namespace

std::size_t base_scalar_count(const ModelConfig& c) {
  const std::size_t per_layer = 2 * c.d_model + 4 * c.d_model * c.d_model + 3 * c.d_model * c.ffn_dim;
  return 2 * c.vocab_size * c.d_model + c.n_layers * per_layer + c.d_model;
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config.d_model, f = config.ffn_dim;
  constexpr double kStd = 0.02;
  ModelParams p;
  p.config = config;
  p.tok_embedding = normal_tensor<T>({config.vocab_size, d}, kStd, rng);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    LayerParams<T> layer;
    layer.attn_norm = BasicTensor<T>::full({d}, T(1));
    layer.wq = normal_tensor<T>({d, d}, kStd, rng);
    layer.wk = normal_tensor<T>({d, d}, kStd, rng);
    layer.wv = normal_tensor<T>({d, d}, kStd, rng);
    layer.wo = normal_tensor<T>({d, d}, kStd, rng);
    layer.ffn_norm = BasicTensor<T>::full({d}, T(1));
    layer.w_gate = normal_tensor<T>({f, d}, kStd, rng);
    layer.w_up = normal_tensor<T>({f, d}, kStd, rng);
    layer.w_down = normal_tensor<T>({d, f}, kStd, rng);
    p.layers.push_back(std::move(layer));
  }
  p.final_norm = BasicTensor<T>::full({d}, T(1));
  p.lm_head = normal_tensor<T>({config.vocab_size, d}, kStd, rng);
  return p;
}

template <typename T>
std::vector<NamedTensor<T>> ModelParams<T>::named_tensors() const {
  std::vector<NamedTensor<T>> out;
  out.push_back({"tok_embedding", tok_embedding});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layers." + std::to_string(l) + ".";
    const auto& layer = layers[l];
    out.push_back({prefix + "attn_norm", layer.attn_norm});
    out.push_back({prefix + "wq", layer.wq});
    out.push_back({prefix + "wk", layer.wk});
    out.push_back({prefix + "wv", layer.wv});
    out.push_back({prefix + "wo", layer.wo});
    out.push_back({prefix + "ffn_norm", layer.ffn_norm});
    out.push_back({prefix + "w_gate", layer.w_gate});
    out.push_back({prefix + "w_up", layer.w_up});
    out.push_back({prefix + "w_down", layer.w_down});
  }
  out.push_back({"final_norm", final_norm});
  out.push_back({"lm_head", lm_head});
  return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::from_named(const ModelConfig& config, const std::vector<NamedTensor<T>>& tensors) {
  config.validate();
  std::map<std::string, BasicTensor<T>> by_name;
  for (const auto& nt : tensors) by_name[nt.name] = nt.tensor;
  const std::size_t d = config.d_model, f = config.ffn_dim;
  auto take = [&](const std::string& name, const Shape& dims) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("missing base tensor '" + name + "'");
    if (it->second.dims() != dims) {
      throw FormatError("base tensor '" + name + "' has shape " + shape_str(it->second.dims()) + ", expected " +
                        shape_str(dims));
    }
    return it->second;
  };
  ModelParams p;
  p.config = config;
  p.tok_embedding = take("tok_embedding", {config.vocab_size, d});
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::string prefix = "layers." + std::to_string(l) + ".";
    LayerParams<T> layer;
    layer.attn_norm = take(prefix + "attn_norm", {d});
    layer.wq = take(prefix + "wq", {d, d});
    layer.wk = take(prefix + "wk", {d, d});
    layer.wv = take(prefix + "wv", {d, d});
    layer.wo = take(prefix + "wo", {d, d});
    layer.ffn_norm = take(prefix + "ffn_norm", {d});
    layer.w_gate = take(prefix + "w_gate", {f, d});
    layer.w_up = take(prefix + "w_up", {f, d});
    layer.w_down = take(prefix + "w_down", {d, f});
    p.layers.push_back(std::move(layer));
  }
  p.final_norm = take("final_norm", {d});
  p.lm_head = take("lm_head", {config.vocab_size, d});
  return p;
}

template <typename T>
std::size_t ModelParams<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& nt : named_tensors()) n += nt.tensor.numel();
  return n;
}

template <typename T>
void ModelParams<T>::set_trainable(bool flag) {
  for (auto& nt : named_tensors()) nt.tensor.set_requires_grad(flag);
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
  std::vector<NamedTensor<T>> copies;
  for (const auto& nt : named_tensors()) copies.push_back({nt.name, nt.tensor.clone()});
  return from_named(config, copies);
}

template struct ModelParams<float>;
template struct ModelParams<double>;

}  // namespace kvc
