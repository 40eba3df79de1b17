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
#include <span>

#include "kvc/tensor.hpp"

// Differentiable operators. All 2-D operands are row-major [rows x cols];
// attention operands pack heads as contiguous column blocks of width
// d_model / n_heads.
namespace kvc::ops {

enum class Reduction { kSum, kMean };

// [m x p] * [p x n] -> [m x n]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// x[t x in] * w[out x in]^T -> [t x out]. Weights use the [out x in] layout.
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> softmax_lastdim(const BasicTensor<T>& x);

// x / sqrt(mean(x^2) + eps) * weight, row-wise over the last dimension.
template <typename T>
BasicTensor<T> rms_norm(const BasicTensor<T>& x, const BasicTensor<T>& weight, T eps);

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x);

// Row gather from an embedding table [V x d].
template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const TokenId> ids);

// Rotary position embedding over x[t x (n_heads*head_dim)]. Pairs are
// adjacent columns (2i, 2i+1) inside each head; pair i of a head at
// position p is rotated by p * theta^(-2i/head_dim).
template <typename T>
BasicTensor<T> rope(const BasicTensor<T>& x, std::size_t n_heads, std::span<const std::size_t> positions,
                    double theta);

template <typename T>
BasicTensor<T> concat_rows(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Rows [begin, end) of a 2-D tensor.
template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t end);

// Scaled dot-product attention of q[t x d] over keys/values [s x d], s >= t.
// The last t keys belong to the queries themselves; query i sees keys
// [0, s - t + i]. Returns the number of (query, key) pairs per head via
// `pairs_per_head` when non-null.
template <typename T>
BasicTensor<T> causal_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                                std::size_t n_heads, std::uint64_t* pairs_per_head = nullptr);

// Token-level cross entropy of logits[n x V] against n targets.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const TokenId> targets,
                             Reduction reduction = Reduction::kMean);

}  // namespace kvc::ops
