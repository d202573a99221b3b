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

// Test-only oracles: central finite differences over leaf tensors.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "rstb/tensor.hpp"

namespace rstb::testing {

inline Tensor RandomTensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                           bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = u(rng);
  return Tensor::FromData(std::move(shape), std::move(v), requires_grad);
}

// Central differences of loss() with respect to every element of `leaf`.
inline std::vector<double> NumericGrad(Tensor& leaf, const std::function<double()>& loss,
                                       double h = 1e-4) {
  std::vector<double> g(leaf.numel());
  auto data = leaf.mutable_data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + h;
    const double up = loss();
    data[i] = saved - h;
    const double down = loss();
    data[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Relative error with an absolute fallback near zero.
inline double GradError(std::span<const double> analytic, const std::vector<double>& numeric,
                        double abs_floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double diff = std::abs(a - numeric[i]);
    const double scale = std::max(std::abs(a), std::abs(numeric[i]));
    const double err = diff <= abs_floor ? 0.0 : diff / scale;
    worst = std::max(worst, err);
  }
  return worst;
}

// Builds the loss graph via `build`, back-propagates, and compares every
// leaf's gradient to finite differences. Returns the worst relative error.
inline double CheckGradients(std::vector<Tensor*> leaves, const std::function<Tensor()>& build,
                             double h = 1e-4) {
  for (Tensor* t : leaves) t->zero_grad();
  build().Backward();
  double worst = 0.0;
  for (Tensor* t : leaves) {
    const auto numeric = NumericGrad(*t, [&] {
      NoGradGuard guard;
      return build().item();
    }, h);
    worst = std::max(worst, GradError(t->grad(), numeric));
  }
  return worst;
}

struct OracleStats {
  double worst = 0.0;
  int accepted = 0;
  int redrawn = 0;
};

// Scores `instances` random draws against finite differences. A draw with a
// relu or max kink within h of the sample point shows up as disagreement
// between its h and h/10 central differences; such draws are redrawn, not
// scored. The screen never looks at the analytic gradient.
inline OracleStats GradientOracle(int instances, const std::vector<Tensor*>& leaves,
                                  const std::function<void()>& draw,
                                  const std::function<Tensor()>& build, double h = 1e-4) {
  OracleStats stats;
  const int max_draws = 3 * instances;
  for (int d = 0; d < max_draws && stats.accepted < instances; ++d) {
    draw();
    for (Tensor* t : leaves) t->zero_grad();
    build().Backward();
    auto loss = [&] {
      NoGradGuard guard;
      return build().item();
    };
    double err = 0.0;
    bool smooth = true;
    for (Tensor* t : leaves) {
      const auto coarse = NumericGrad(*t, loss, h);
      const auto fine = NumericGrad(*t, loss, h / 10.0);
      if (GradError(coarse, fine) > 1e-4) {
        smooth = false;
        break;
      }
      err = std::max(err, GradError(t->grad(), coarse));
    }
    if (!smooth) {
      ++stats.redrawn;
      continue;
    }
    ++stats.accepted;
    stats.worst = std::max(stats.worst, err);
  }
  return stats;
}

}  // namespace rstb::testing
