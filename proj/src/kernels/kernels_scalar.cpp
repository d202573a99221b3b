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

#include "rstb/kernels.hpp"

namespace rstb::kernels {
namespace {

void Axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void Add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void Sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void Mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void Scale(double s, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = s * x[i];
}

void Accumulate(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

// The reductions below spell out the 4-lane association order from
// kernels.hpp; the SIMD variants must match them bit for bit.

double Sum(const double* x, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    for (int j = 0; j < 4; ++j) lane[j] += x[i + j];
  }
  double total = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (std::size_t i = body; i < n; ++i) total += x[i];
  return total;
}

double Dot(const double* x, const double* y, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    for (int j = 0; j < 4; ++j) {
      const double p = x[i + j] * y[i + j];
      lane[j] += p;
    }
  }
  double total = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (std::size_t i = body; i < n; ++i) {
    const double p = x[i] * y[i];
    total += p;
  }
  return total;
}

double SumSqDiff(const double* a, const double* b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    for (int j = 0; j < 4; ++j) {
      const double d = a[i + j] - b[i + j];
      const double p = d * d;
      lane[j] += p;
    }
  }
  double total = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (std::size_t i = body; i < n; ++i) {
    const double d = a[i] - b[i];
    const double p = d * d;
    total += p;
  }
  return total;
}

void MultiAxpy(const double* w, const double* const* src, std::size_t taps, double* out,
               std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = out[i];
    for (std::size_t t = 0; t < taps; ++t) {
      const double p = w[t] * src[t][i];
      acc += p;
    }
    out[i] = acc;
  }
}

void MultiDot(const double* a, const double* const* src, std::size_t taps, double* acc,
              std::size_t n) {
  for (std::size_t t = 0; t < taps; ++t) acc[t] += Dot(a, src[t], n);
}

constexpr KernelTable kScalarTable{
    Backend::kScalar, "scalar", Axpy, Add, Sub, Mul, Scale, Accumulate, Sum, Dot, SumSqDiff,
    MultiAxpy, MultiDot,
};

}  // namespace

const KernelTable& ScalarKernels() { return kScalarTable; }

}  // namespace rstb::kernels
