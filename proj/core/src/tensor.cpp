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

#include "kvc/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "kvc/errors.hpp"

namespace kvc {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape dims, std::vector<T> values, bool requires_grad) {
  for (auto d : dims) {
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(dims));
  }
  if (shape_numel(dims) != values.size()) {
    throw DimensionError("tensor " + shape_str(dims) + " needs " + std::to_string(shape_numel(dims)) +
                         " values, got " + std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->dims = std::move(dims);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape dims, bool requires_grad) {
  const auto n = shape_numel(dims);
  return BasicTensor(std::move(dims), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape dims, T value) {
  const auto n = shape_numel(dims);
  return BasicTensor(std::move(dims), std::vector<T>(n, value));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return BasicTensor({1}, {value});
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_node(NodePtr node) {
  BasicTensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
const Shape& BasicTensor<T>::dims() const {
  if (!node_) throw StateError("use of an undefined tensor");
  return node_->dims;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  const auto& d = dims();
  if (axis >= d.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(d));
  return d[axis];
}

template <typename T>
std::size_t BasicTensor<T>::numel() const {
  return shape_numel(dims());
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  if (!node_) throw StateError("use of an undefined tensor");
  return node_->value;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  if (!node_) throw StateError("use of an undefined tensor");
  if (!node_->is_leaf) throw StateError("interior tensors are read-only");
  return node_->value;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(dims()));
  return node_->value[0];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool flag) {
  if (!node_) throw StateError("use of an undefined tensor");
  if (!node_->is_leaf) throw StateError("requires_grad can only be toggled on leaves");
  node_->requires_grad = flag;
  if (!flag) node_->grad.clear();
}

template <typename T>
bool BasicTensor<T>::is_leaf() const {
  return node_ && node_->is_leaf;
}

template <typename T>
bool BasicTensor<T>::has_grad() const {
  return node_ && !node_->grad.empty();
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!has_grad()) throw StateError("tensor has no gradient");
  return node_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return BasicTensor(dims(), node_->value, node_->requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(dims(), node_->value, false);
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  for (T v : data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

template <typename T>
void backward(const BasicTensor<T>& loss) {
  using NodeT = detail::Node<T>;
  if (!loss.defined()) throw StateError("backward on an undefined tensor");
  if (loss.numel() != 1) throw ContractError("backward needs a scalar loss, got " + shape_str(loss.dims()));
  NodeT* root = loss.node().get();
  if (root->consumed) throw StateError("backward called twice on the same graph");
  if (!root->requires_grad) return;
  if (root->is_leaf) {
    root->grad_buffer()[0] += T(1);
    return;
  }

  // Iterative post-order DFS over interior nodes; reversed it is a valid
  // topological order from the loss towards the leaves.
  std::vector<NodeT*> order;
  std::vector<std::shared_ptr<NodeT>> alive;  // owners, so clearing inputs cannot free pending nodes
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const auto& owner = node->inputs[next++];
      NodeT* child = owner.get();
      if (child->requires_grad && !child->is_leaf && !visited.count(child)) {
        if (child->consumed) throw StateError("graph was already consumed by an earlier backward");
        visited.insert(child);
        alive.push_back(owner);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (!node->grad.empty() && node->backward) node->backward(*node);
    node->grad.clear();
    node->grad.shrink_to_fit();
    node->backward = nullptr;
    node->inputs.clear();
    node->consumed = true;
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);

}  // namespace kvc
