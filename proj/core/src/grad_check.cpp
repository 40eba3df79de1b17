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

#include "kvc/grad_check.hpp"

#include <cmath>
#include <vector>

#include "kvc/errors.hpp"

namespace kvc {

GradCheckReport grad_check_report(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& x, double h) {
  if (h < 1e-6 || h > 1e-2) throw ContractError("grad_check: step must lie in [1e-6, 1e-2]");

  Tensor64 probe = x.detach();
  probe.set_requires_grad(true);
  const Tensor64 y = f(probe);
  if (!y.defined() || y.numel() != 1) throw ContractError("grad_check: function must be scalar-valued");
  backward(y);
  std::vector<double> analytic(probe.numel(), 0.0);
  if (probe.has_grad()) {
    auto g = probe.grad();
    analytic.assign(g.begin(), g.end());
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  const auto base = x.data();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    std::vector<double> shifted(base.begin(), base.end());
    shifted[i] = base[i] + h;
    const double up = f(Tensor64(x.dims(), shifted)).item();
    shifted[i] = base[i] - h;
    const double down = f(Tensor64(x.dims(), shifted)).item();
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8);
    if (err > report.max_rel_error || i == 0) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.autograd_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

}  // namespace kvc
