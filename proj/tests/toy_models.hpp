// Copyright 2026 The RSTB Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

// Small differentiable restorers with closed-form behaviour, used by the
// attack oracles.

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>

#include "rstb/model.hpp"
#include "rstb/ops.hpp"

namespace rstb::testing {

class FunctionRestorer final : public Restorer {
 public:
  explicit FunctionRestorer(std::function<Tensor(const Tensor&)> f) : f_(std::move(f)) {}
  Tensor Restore(const Tensor& input) const override { return f_(input); }

 private:
  std::function<Tensor(const Tensor&)> f_;
};

// f(x) = x, pointwise.
inline FunctionRestorer IdentityToy() {
  return FunctionRestorer([](const Tensor& x) { return AddScalar(x, 0.0); });
}

// f(x) = 0.8 sigmoid(6x - 3) + 0.1, pointwise; the scalar toy model.
inline double ToyScalar(double x) { return 0.8 / (1.0 + std::exp(-(6.0 * x - 3.0))) + 0.1; }
inline double ToyScalarDerivative(double x) {
  const double s = 1.0 / (1.0 + std::exp(-(6.0 * x - 3.0)));
  return 0.8 * 6.0 * s * (1.0 - s);
}
inline FunctionRestorer SigmoidToy() {
  return FunctionRestorer([](const Tensor& x) {
    return AddScalar(ScalarMul(Sigmoid(AddScalar(ScalarMul(x, 6.0), -3.0)), 0.8), 0.1);
  });
}

// Identity whose backward emits NaN from the `poison_from`-th call on
// (1-based), to exercise the non-finite abort path.
class PoisonedToy final : public Restorer {
 public:
  explicit PoisonedToy(int poison_from) : poison_from_(poison_from) {}
  Tensor Restore(const Tensor& input) const override {
    const int call = ++calls_;
    const bool poison = call >= poison_from_;
    std::vector<double> v(input.data().begin(), input.data().end());
    return MakeOpResult("poisoned", input.shape(), std::move(v), {input},
                        [poison](detail::Node& self) {
                          auto g = detail::GradBuffer(*self.inputs[0]);
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            g[i] += poison ? std::numeric_limits<double>::quiet_NaN() : self.grad[i];
                          }
                        });
  }

 private:
  int poison_from_;
  mutable std::atomic<int> calls_{0};
};

}  // namespace rstb::testing
