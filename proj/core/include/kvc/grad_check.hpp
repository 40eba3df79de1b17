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
#include <functional>

#include "kvc/tensor.hpp"

namespace kvc {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double autograd_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences, everything evaluated in 64-bit. The error per component is
// |autograd - fd| / (|fd| + 1e-8); the maximum is reported.
GradCheckReport grad_check_report(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& x, double h);

inline double grad_check(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& x, double h) {
  return grad_check_report(f, x, h).max_rel_error;
}

}  // namespace kvc
