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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kvc {

using Shape = std::vector<std::size_t>;
using TokenId = std::int32_t;

std::size_t shape_numel(const Shape& dims);
std::string shape_str(const Shape& dims);

namespace detail {

// One vertex of the dynamic autograd graph. Leaves own parameters and
// inputs; interior nodes additionally hold the closure that propagates
// their gradient to `inputs`.
template <typename T>
struct Node {
  Shape dims;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

// Dense row-major tensor handle. Copies share storage; use clone() for a
// deep copy. Interior (op-produced) tensors are read-only.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  BasicTensor() = default;
  BasicTensor(Shape dims, std::vector<T> values, bool requires_grad = false);

  static BasicTensor zeros(Shape dims, bool requires_grad = false);
  static BasicTensor full(Shape dims, T value);
  static BasicTensor scalar(T value);
  static BasicTensor from_node(NodePtr node);

  bool defined() const { return node_ != nullptr; }
  const Shape& dims() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return dims().size(); }
  std::size_t numel() const;

  std::span<const T> data() const;
  // Writable view of a leaf's storage (parameters, optimizer updates).
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const T> grad() const;
  void zero_grad();

  // Deep copy as a fresh leaf. Keeps the requires_grad flag.
  BasicTensor clone() const;
  // Deep copy as a fresh leaf that never requires grad.
  BasicTensor detach() const;
  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(numel());
    auto src = data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    return BasicTensor<U>(dims(), std::move(out), requires_grad());
  }

  bool all_finite() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate; the
// graph is released afterwards and a second call throws StateError.
template <typename T>
void backward(const BasicTensor<T>& loss);

}  // namespace kvc
