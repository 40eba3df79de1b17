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

#include "kvc/adapters.hpp"

#include <map>
#include <random>
#include <utility>

#include "kvc/errors.hpp"
#include "kvc/ops.hpp"

namespace kvc {

namespace {

constexpr const char* kProjections[] = {"q", "k", "v", "o"};

template <typename T>
LoraPair<T>& pair_of(LoraLayer<T>& layer, int index) {
  switch (index) {
    case 0:
      return layer.q;
    case 1:
      return layer.k;
    case 2:
      return layer.v;
    default:
      return layer.o;
  }
}

template <typename T>
const LoraPair<T>& pair_of(const LoraLayer<T>& layer, int index) {
  return pair_of(const_cast<LoraLayer<T>&>(layer), index);
}

template <typename T>
BasicTensor<T> normal_leaf(Shape dims, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> values(shape_numel(dims));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return BasicTensor<T>(std::move(dims), std::move(values), true);
}

}  // namespace

template <typename T>
std::vector<NamedTensor<T>> AdapterParams<T>::named_tensors() const {
  std::vector<NamedTensor<T>> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (int p = 0; p < 4; ++p) {
      const std::string prefix = "lora." + std::to_string(l) + "." + kProjections[p] + ".";
      out.push_back({prefix + "a", pair_of(layers[l], p).a});
      out.push_back({prefix + "b", pair_of(layers[l], p).b});
    }
  }
  out.push_back({"compressed_embeddings", compressed_embeddings});
  if (has_trigger()) out.push_back({"regen_trigger", regen_trigger});
  return out;
}

template <typename T>
AdapterParams<T> AdapterParams<T>::from_named(const ModelConfig& config, const AdapterConfig& adapter_config,
                                              const std::vector<NamedTensor<T>>& tensors) {
  std::map<std::string, BasicTensor<T>> by_name;
  for (const auto& nt : tensors) by_name[nt.name] = nt.tensor;
  auto take = [&](const std::string& name, const Shape& dims) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("missing adapter tensor '" + name + "'");
    if (it->second.dims() != dims) {
      throw FormatError("adapter tensor '" + name + "' has shape " + shape_str(it->second.dims()) + ", expected " +
                        shape_str(dims));
    }
    return it->second;
  };
  const std::size_t d = config.d_model, r = adapter_config.rank;
  AdapterParams out;
  out.rank = r;
  out.alpha = adapter_config.alpha;
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    LoraLayer<T> layer;
    for (int p = 0; p < 4; ++p) {
      const std::string prefix = "lora." + std::to_string(l) + "." + kProjections[p] + ".";
      pair_of(layer, p).a = take(prefix + "a", {r, d});
      pair_of(layer, p).b = take(prefix + "b", {d, r});
    }
    out.layers.push_back(std::move(layer));
  }
  out.compressed_embeddings = take("compressed_embeddings", {config.k_max, d});
  if (adapter_config.regen_trigger) out.regen_trigger = take("regen_trigger", {1, d});
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> AdapterParams<T>::trainables() const {
  std::vector<BasicTensor<T>> out;
  for (const auto& nt : named_tensors()) out.push_back(nt.tensor);
  return out;
}

template <typename T>
std::size_t AdapterParams<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& nt : named_tensors()) n += nt.tensor.numel();
  return n;
}

template <typename T>
void AdapterParams<T>::zero_grad() const {
  for (auto t : trainables()) t.zero_grad();
}

template <typename T>
AdapterParams<T> AdapterParams<T>::clone() const {
  AdapterParams out = *this;
  for (auto& layer : out.layers) {
    for (int p = 0; p < 4; ++p) {
      pair_of(layer, p).a = pair_of(layer, p).a.clone();
      pair_of(layer, p).b = pair_of(layer, p).b.clone();
    }
  }
  out.compressed_embeddings = compressed_embeddings.clone();
  if (has_trigger()) out.regen_trigger = regen_trigger.clone();
  return out;
}

template <typename T>
AdapterParams<T> init_adapters(const ModelConfig& config, const AdapterConfig& adapter_config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.d_model, r = adapter_config.rank;
  if (r == 0) throw ConfigError("LoRA rank must be at least 1");
  if (r > d) throw ConfigError("LoRA rank " + std::to_string(r) + " exceeds d_model " + std::to_string(d));
  constexpr double kStd = 0.02;
  std::mt19937_64 rng(seed);
  AdapterParams<T> out;
  out.rank = r;
  out.alpha = adapter_config.alpha;
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    LoraLayer<T> layer;
    for (int p = 0; p < 4; ++p) {
      pair_of(layer, p).a = normal_leaf<T>({r, d}, kStd, rng);
      pair_of(layer, p).b = BasicTensor<T>::zeros({d, r}, true);
    }
    out.layers.push_back(std::move(layer));
  }
  out.compressed_embeddings = normal_leaf<T>({config.k_max, d}, kStd, rng);
  if (adapter_config.regen_trigger) out.regen_trigger = normal_leaf<T>({1, d}, kStd, rng);
  return out;
}

template <typename T>
BasicTensor<T> lora_linear_apply(const BasicTensor<T>& wx, const BasicTensor<T>& x, const BasicTensor<T>& a,
                                 const BasicTensor<T>& b, double alpha, std::size_t rank) {
  if (rank == 0) throw ConfigError("LoRA rank must be at least 1");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != rank || b.dim(1) != rank) {
    throw DimensionError("lora: A " + shape_str(a.dims()) + " / B " + shape_str(b.dims()) + " inconsistent with rank " +
                         std::to_string(rank));
  }
  if (wx.rank() != 2 || wx.dim(1) != b.dim(0) || wx.dim(0) != x.dim(0)) {
    throw DimensionError("lora: base output " + shape_str(wx.dims()) + " does not match B " + shape_str(b.dims()));
  }
  const auto delta = ops::linear(ops::linear(x, a), b);
  return ops::add(wx, ops::scale(delta, static_cast<T>(alpha / static_cast<double>(rank))));
}

std::size_t adapter_scalar_count(const ModelConfig& config, std::size_t rank, bool regen_trigger) {
  const std::size_t d = config.d_model;
  return 4 * config.n_layers * 2 * d * rank + config.k_max * d + (regen_trigger ? d : 0);
}

double trainable_param_fraction(const ModelConfig& config, std::size_t rank, bool regen_trigger) {
  return static_cast<double>(adapter_scalar_count(config, rank, regen_trigger)) /
         static_cast<double>(base_scalar_count(config));
}

template struct AdapterParams<float>;
template struct AdapterParams<double>;
template AdapterParams<float> init_adapters<float>(const ModelConfig&, const AdapterConfig&, std::uint64_t);
template AdapterParams<double> init_adapters<double>(const ModelConfig&, const AdapterConfig&, std::uint64_t);
template BasicTensor<float> lora_linear_apply(const BasicTensor<float>&, const BasicTensor<float>&,
                                              const BasicTensor<float>&, const BasicTensor<float>&, double,
                                              std::size_t);
template BasicTensor<double> lora_linear_apply(const BasicTensor<double>&, const BasicTensor<double>&,
                                               const BasicTensor<double>&, const BasicTensor<double>&, double,
                                               std::size_t);

}  // namespace kvc
