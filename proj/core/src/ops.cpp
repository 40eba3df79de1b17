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

#include "kvc/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "kvc/errors.hpp"

namespace kvc::ops {

namespace {

template <typename T>
using Node = detail::Node<T>;
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
const std::vector<T>& value_of(const BasicTensor<T>& t) {
  return t.node()->value;
}

template <typename T>
void require_defined(const BasicTensor<T>& t, const char* op) {
  if (!t.defined()) throw StateError(std::string(op) + ": undefined operand");
}

template <typename T>
void require_rank2(const BasicTensor<T>& t, const char* op) {
  require_defined(t, op);
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.dims()));
}

// Wraps an op output into a tensor. The graph edge is recorded only when
// grad mode is on and some operand requires grad.
template <typename T>
BasicTensor<T> make_result(const char* op, Shape dims, std::vector<T> value,
                           std::initializer_list<const BasicTensor<T>*> operands,
                           std::function<void(Node<T>&)> grad_fn) {
  for (const T v : value) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value produced");
  }
  auto node = std::make_shared<Node<T>>();
  node->dims = std::move(dims);
  node->value = std::move(value);
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto* operand : operands) needs_grad = needs_grad || operand->requires_grad();
  }
  if (needs_grad) {
    node->is_leaf = false;
    node->requires_grad = true;
    for (const auto* operand : operands) node->inputs.push_back(operand->node());
    node->backward = std::move(grad_fn);
  }
  return BasicTensor<T>::from_node(std::move(node));
}

template <typename T>
bool wants_grad(const Node<T>& self, std::size_t input) {
  return self.inputs[input]->requires_grad;
}

}  // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), p = a.dim(1), n = b.dim(1);
  if (b.dim(0) != p) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.dims()) + " * " + shape_str(b.dims()));
  }
  std::vector<T> out(m * n);
  MatMap<T>(out.data(), m, n).noalias() = ConstMatMap<T>(value_of(a).data(), m, p) * ConstMatMap<T>(value_of(b).data(), p, n);
  return make_result<T>("matmul", {m, n}, std::move(out), {&a, &b}, [m, p, n](Node<T>& self) {
    ConstMatMap<T> dc(self.grad.data(), m, n);
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (na.requires_grad) {
      MatMap<T>(na.grad_buffer().data(), m, p).noalias() += dc * ConstMatMap<T>(nb.value.data(), p, n).transpose();
    }
    if (nb.requires_grad) {
      MatMap<T>(nb.grad_buffer().data(), p, n).noalias() += ConstMatMap<T>(na.value.data(), m, p).transpose() * dc;
    }
  });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const std::size_t t = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  if (w.dim(1) != in) {
    throw DimensionError("linear: input width " + std::to_string(in) + " does not match weight " + shape_str(w.dims()));
  }
  std::vector<T> out(t * out_dim);
  MatMap<T>(out.data(), t, out_dim).noalias() =
      ConstMatMap<T>(value_of(x).data(), t, in) * ConstMatMap<T>(value_of(w).data(), out_dim, in).transpose();
  return make_result<T>("linear", {t, out_dim}, std::move(out), {&x, &w}, [t, in, out_dim](Node<T>& self) {
    ConstMatMap<T> dy(self.grad.data(), t, out_dim);
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    if (nx.requires_grad) {
      MatMap<T>(nx.grad_buffer().data(), t, in).noalias() += dy * ConstMatMap<T>(nw.value.data(), out_dim, in);
    }
    if (nw.requires_grad) {
      MatMap<T>(nw.grad_buffer().data(), out_dim, in).noalias() += dy.transpose() * ConstMatMap<T>(nx.value.data(), t, in);
    }
  });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  if (a.dims() != b.dims()) throw DimensionError("add: " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  std::vector<T> out(value_of(a));
  const auto& bv = value_of(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result<T>("add", a.dims(), std::move(out), {&a, &b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self, k)) continue;
      auto& g = self.inputs[k]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  if (a.dims() != b.dims()) throw DimensionError("mul: " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  std::vector<T> out(value_of(a));
  const auto& bv = value_of(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result<T>("mul", a.dims(), std::move(out), {&a, &b}, [](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  require_defined(x, "scale");
  std::vector<T> out(value_of(x));
  for (auto& v : out) v *= factor;
  return make_result<T>("scale", x.dims(), std::move(out), {&x}, [factor](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  require_defined(x, "sum");
  T total = 0;
  for (const T v : value_of(x)) total += v;
  return make_result<T>("sum", {1}, {total}, {&x}, [](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
BasicTensor<T> softmax_lastdim(const BasicTensor<T>& x) {
  require_defined(x, "softmax_lastdim");
  const std::size_t n = x.dims().back();
  const std::size_t rows = x.numel() / n;
  const auto& xv = value_of(x);
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * n;
    T* o = out.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return make_result<T>("softmax_lastdim", x.dims(), std::move(out), {&x}, [rows, n](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * n;
      const T* dy = self.grad.data() + r * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

template <typename T>
BasicTensor<T> rms_norm(const BasicTensor<T>& x, const BasicTensor<T>& weight, T eps) {
  require_defined(x, "rms_norm");
  require_defined(weight, "rms_norm");
  const std::size_t d = x.dims().back();
  if (weight.rank() != 1 || weight.dim(0) != d) {
    throw DimensionError("rms_norm: weight " + shape_str(weight.dims()) + " does not match width " + std::to_string(d));
  }
  if (eps < 0) throw ContractError("rms_norm: eps must be non-negative");
  const std::size_t rows = x.numel() / d;
  const auto& xv = value_of(x);
  const auto& wv = value_of(weight);
  std::vector<T> out(xv.size());
  std::vector<T> inv_rms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * d;
    T ss = 0;
    for (std::size_t j = 0; j < d; ++j) ss += in[j] * in[j];
    const T inv = T(1) / std::sqrt(ss / static_cast<T>(d) + eps);
    inv_rms[r] = inv;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = in[j] * inv * wv[j];
  }
  return make_result<T>("rms_norm", x.dims(), std::move(out), {&x, &weight},
                        [rows, d, inv_rms = std::move(inv_rms)](Node<T>& self) {
                          auto& nx = *self.inputs[0];
                          auto& nw = *self.inputs[1];
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* in = nx.value.data() + r * d;
                            const T* dy = self.grad.data() + r * d;
                            const T inv = inv_rms[r];
                            if (nx.requires_grad) {
                              T dot = 0;
                              for (std::size_t j = 0; j < d; ++j) dot += dy[j] * nw.value[j] * in[j];
                              const T coeff = inv * inv * inv * dot / static_cast<T>(d);
                              T* gx = nx.grad_buffer().data() + r * d;
                              for (std::size_t j = 0; j < d; ++j) gx[j] += inv * nw.value[j] * dy[j] - in[j] * coeff;
                            }
                            if (nw.requires_grad) {
                              auto& gw = nw.grad_buffer();
                              for (std::size_t j = 0; j < d; ++j) gw[j] += dy[j] * in[j] * inv;
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x) {
  require_defined(x, "silu");
  std::vector<T> out(value_of(x));
  for (auto& v : out) v = v / (T(1) + std::exp(-v));
  return make_result<T>("silu", x.dims(), std::move(out), {&x}, [](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& g = nx.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = nx.value[i];
      const T s = T(1) / (T(1) + std::exp(-v));
      g[i] += self.grad[i] * s * (T(1) + v * (T(1) - s));
    }
  });
}

template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const TokenId> ids) {
  require_rank2(table, "embedding");
  if (ids.empty()) throw ContractError("embedding: empty id list");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  const auto& tv = value_of(table);
  std::vector<T> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("embedding: token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<TokenId> saved(ids.begin(), ids.end());
  return make_result<T>("embedding", {ids.size(), d}, std::move(out), {&table},
                        [d, saved = std::move(saved)](Node<T>& self) {
                          auto& g = self.inputs[0]->grad_buffer();
                          for (std::size_t i = 0; i < saved.size(); ++i) {
                            T* row = g.data() + static_cast<std::size_t>(saved[i]) * d;
                            const T* src = self.grad.data() + i * d;
                            for (std::size_t j = 0; j < d; ++j) row[j] += src[j];
                          }
                        });
}

template <typename T>
BasicTensor<T> rope(const BasicTensor<T>& x, std::size_t n_heads, std::span<const std::size_t> positions,
                    double theta) {
  require_rank2(x, "rope");
  const std::size_t t = x.dim(0), d = x.dim(1);
  if (n_heads == 0 || d % n_heads != 0) throw DimensionError("rope: width not divisible by head count");
  const std::size_t head_dim = d / n_heads;
  if (head_dim % 2 != 0) throw DimensionError("rope: head_dim must be even");
  if (positions.size() != t) throw DimensionError("rope: one position per row required");
  const std::size_t half = head_dim / 2;
  std::vector<T> cos_table(t * half), sin_table(t * half);
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
      const double angle = static_cast<double>(positions[r]) * freq;
      cos_table[r * half + i] = static_cast<T>(std::cos(angle));
      sin_table[r * half + i] = static_cast<T>(std::sin(angle));
    }
  }
  const auto& xv = value_of(x);
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t i = 0; i < half; ++i) {
        const std::size_t base = r * d + h * head_dim + 2 * i;
        const T c = cos_table[r * half + i], s = sin_table[r * half + i];
        const T x0 = xv[base], x1 = xv[base + 1];
        out[base] = x0 * c - x1 * s;
        out[base + 1] = x0 * s + x1 * c;
      }
    }
  }
  return make_result<T>(
      "rope", x.dims(), std::move(out), {&x},
      [t, d, n_heads, head_dim, half, cos_table = std::move(cos_table), sin_table = std::move(sin_table)](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t r = 0; r < t; ++r) {
          for (std::size_t h = 0; h < n_heads; ++h) {
            for (std::size_t i = 0; i < half; ++i) {
              const std::size_t base = r * d + h * head_dim + 2 * i;
              const T c = cos_table[r * half + i], s = sin_table[r * half + i];
              const T g0 = self.grad[base], g1 = self.grad[base + 1];
              g[base] += g0 * c + g1 * s;
              g[base + 1] += -g0 * s + g1 * c;
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> concat_rows(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank2(a, "concat_rows");
  require_rank2(b, "concat_rows");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("concat_rows: column mismatch " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  }
  const std::size_t ra = a.dim(0), rb = b.dim(0), cols = a.dim(1);
  std::vector<T> out;
  out.reserve((ra + rb) * cols);
  out.insert(out.end(), value_of(a).begin(), value_of(a).end());
  out.insert(out.end(), value_of(b).begin(), value_of(b).end());
  return make_result<T>("concat_rows", {ra + rb, cols}, std::move(out), {&a, &b}, [ra, cols](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self, k)) continue;
      auto& g = self.inputs[k]->grad_buffer();
      const T* src = self.grad.data() + (k == 0 ? 0 : ra * cols);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
    }
  });
}

template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  if (begin >= end || end > x.dim(0)) {
    throw RangeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside " +
                     shape_str(x.dims()));
  }
  const std::size_t cols = x.dim(1);
  const auto& xv = value_of(x);
  std::vector<T> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                     xv.begin() + static_cast<std::ptrdiff_t>(end * cols));
  return make_result<T>("slice_rows", {end - begin, cols}, std::move(out), {&x}, [begin, cols](Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    T* dst = g.data() + begin * cols;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> causal_attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                                std::size_t n_heads, std::uint64_t* pairs_per_head) {
  require_rank2(q, "causal_attention");
  require_rank2(k, "causal_attention");
  require_rank2(v, "causal_attention");
  const std::size_t t = q.dim(0), d = q.dim(1), s = k.dim(0);
  if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != s) {
    throw DimensionError("causal_attention: q " + shape_str(q.dims()) + ", k " + shape_str(k.dims()) + ", v " +
                         shape_str(v.dims()));
  }
  if (s < t) throw DimensionError("causal_attention: fewer keys than queries");
  if (n_heads == 0 || d % n_heads != 0) throw DimensionError("causal_attention: width not divisible by head count");
  const std::size_t hd = d / n_heads;
  const std::size_t past = s - t;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(hd));

  if (pairs_per_head) {
    // Query i sees past + i + 1 keys.
    *pairs_per_head += static_cast<std::uint64_t>(t) * past + static_cast<std::uint64_t>(t) * (t + 1) / 2;
  }

  const auto& qv = value_of(q);
  const auto& kv = value_of(k);
  const auto& vv = value_of(v);
  std::vector<T> out(t * d);
  // Attention probabilities per head, [n_heads][t x s], zero where masked.
  std::vector<T> probs(n_heads * t * s, T(0));
  for (std::size_t h = 0; h < n_heads; ++h) {
    ConstStridedMap<T> qh(qv.data() + h * hd, t, hd, Eigen::OuterStride<>(d));
    ConstStridedMap<T> kh(kv.data() + h * hd, s, hd, Eigen::OuterStride<>(d));
    ConstStridedMap<T> vh(vv.data() + h * hd, s, hd, Eigen::OuterStride<>(d));
    MatMap<T> p(probs.data() + h * t * s, t, s);
    p.noalias() = (qh * kh.transpose()) * scale_factor;
    for (std::size_t i = 0; i < t; ++i) {
      const std::size_t visible = past + i + 1;
      T* row = p.data() + i * s;
      const T mx = *std::max_element(row, row + visible);
      T z = 0;
      for (std::size_t j = 0; j < visible; ++j) z += (row[j] = std::exp(row[j] - mx));
      for (std::size_t j = 0; j < visible; ++j) row[j] /= z;
      std::fill(row + visible, row + s, T(0));
    }
    StridedMap<T>(out.data() + h * hd, t, hd, Eigen::OuterStride<>(d)).noalias() = p * vh;
  }

  return make_result<T>(
      "causal_attention", {t, d}, std::move(out), {&q, &k, &v},
      [t, d, s, n_heads, hd, scale_factor, probs = std::move(probs)](Node<T>& self) {
        auto& nq = *self.inputs[0];
        auto& nk = *self.inputs[1];
        auto& nv = *self.inputs[2];
        RowMat<T> dp(t, s);
        for (std::size_t h = 0; h < n_heads; ++h) {
          ConstStridedMap<T> qh(nq.value.data() + h * hd, t, hd, Eigen::OuterStride<>(d));
          ConstStridedMap<T> kh(nk.value.data() + h * hd, s, hd, Eigen::OuterStride<>(d));
          ConstStridedMap<T> vh(nv.value.data() + h * hd, s, hd, Eigen::OuterStride<>(d));
          ConstStridedMap<T> doh(self.grad.data() + h * hd, t, hd, Eigen::OuterStride<>(d));
          ConstMatMap<T> p(probs.data() + h * t * s, t, s);
          if (nv.requires_grad) {
            StridedMap<T>(nv.grad_buffer().data() + h * hd, s, hd, Eigen::OuterStride<>(d)).noalias() +=
                p.transpose() * doh;
          }
          if (!nq.requires_grad && !nk.requires_grad) continue;
          dp.noalias() = doh * vh.transpose();
          for (std::size_t i = 0; i < t; ++i) {
            T dot = 0;
            for (std::size_t j = 0; j < s; ++j) dot += p(i, j) * dp(i, j);
            for (std::size_t j = 0; j < s; ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot) * scale_factor;
          }
          if (nq.requires_grad) {
            StridedMap<T>(nq.grad_buffer().data() + h * hd, t, hd, Eigen::OuterStride<>(d)).noalias() += dp * kh;
          }
          if (nk.requires_grad) {
            StridedMap<T>(nk.grad_buffer().data() + h * hd, s, hd, Eigen::OuterStride<>(d)).noalias() +=
                dp.transpose() * qh;
          }
        }
      });
}

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const TokenId> targets, Reduction reduction) {
  require_rank2(logits, "cross_entropy");
  const std::size_t n = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(n) +
                         " rows");
  }
  const auto& lv = value_of(logits);
  std::vector<T> probs(lv.size());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const TokenId target = targets[r];
    if (target < 0 || static_cast<std::size_t>(target) >= vocab) {
      throw IndexError("cross_entropy: target " + std::to_string(target) + " outside [0, " + std::to_string(vocab) +
                       ")");
    }
    const T* row = lv.data() + r * vocab;
    T* pr = probs.data() + r * vocab;
    const T mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    const double log_z = std::log(z) + static_cast<double>(mx);
    for (std::size_t j = 0; j < vocab; ++j) pr[j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - log_z));
    total += log_z - static_cast<double>(row[target]);
  }
  const T norm = reduction == Reduction::kMean ? T(1) / static_cast<T>(n) : T(1);
  std::vector<TokenId> saved(targets.begin(), targets.end());
  return make_result<T>("cross_entropy", {1}, {static_cast<T>(total) * norm}, {&logits},
                        [n, vocab, norm, probs = std::move(probs), saved = std::move(saved)](Node<T>& self) {
                          auto& g = self.inputs[0]->grad_buffer();
                          const T upstream = self.grad[0] * norm;
                          for (std::size_t r = 0; r < n; ++r) {
                            T* gr = g.data() + r * vocab;
                            const T* pr = probs.data() + r * vocab;
                            for (std::size_t j = 0; j < vocab; ++j) gr[j] += upstream * pr[j];
                            gr[saved[r]] -= upstream;
                          }
                        });
}

#define KVC_INSTANTIATE_OPS(T)                                                                                      \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                                    \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&);                                    \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                       \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                       \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                         \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                              \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                             \
  template BasicTensor<T> softmax_lastdim(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> rms_norm(const BasicTensor<T>&, const BasicTensor<T>&, T);                               \
  template BasicTensor<T> silu(const BasicTensor<T>&);                                                             \
  template BasicTensor<T> embedding(const BasicTensor<T>&, std::span<const TokenId>);                              \
  template BasicTensor<T> rope(const BasicTensor<T>&, std::size_t, std::span<const std::size_t>, double);          \
  template BasicTensor<T> concat_rows(const BasicTensor<T>&, const BasicTensor<T>&);                               \
  template BasicTensor<T> slice_rows(const BasicTensor<T>&, std::size_t, std::size_t);                             \
  template BasicTensor<T> causal_attention(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,    \
                                           std::size_t, std::uint64_t*);                                           \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const TokenId>, Reduction);

KVC_INSTANTIATE_OPS(float)
KVC_INSTANTIATE_OPS(double)

#undef KVC_INSTANTIATE_OPS

}  // namespace kvc::ops
