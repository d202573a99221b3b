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

// AArch64 variant. NEON holds two doubles per register, so the four
// canonical reduction lanes live in a pair of accumulators: lo = {l0, l1},
// hi = {l2, l3}.

#include <arm_neon.h>

#include "rstb/kernels.hpp"

namespace rstb::kernels {
namespace {

void Axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t p = vmulq_f64(va, vld1q_f64(x + i));
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), p));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void Add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void Sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void Mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void Scale(double s, const double* x, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vs, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = s * x[i];
}

void Accumulate(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += x[i];
}

inline double Combine(float64x2_t lo, float64x2_t hi) {
  return (vgetq_lane_f64(lo, 0) + vgetq_lane_f64(lo, 1)) +
         (vgetq_lane_f64(hi, 0) + vgetq_lane_f64(hi, 1));
}

double Sum(const double* x, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0), hi = vdupq_n_f64(0.0);
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    lo = vaddq_f64(lo, vld1q_f64(x + i));
    hi = vaddq_f64(hi, vld1q_f64(x + i + 2));
  }
  double total = Combine(lo, hi);
  for (std::size_t i = body; i < n; ++i) total += x[i];
  return total;
}

double Dot(const double* x, const double* y, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0), hi = vdupq_n_f64(0.0);
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(x + i + 2), vld1q_f64(y + i + 2)));
  }
  double total = Combine(lo, hi);
  for (std::size_t i = body; i < n; ++i) {
    const double p = x[i] * y[i];
    total += p;
  }
  return total;
}

double SumSqDiff(const double* a, const double* b, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0), hi = vdupq_n_f64(0.0);
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    const float64x2_t d0 = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    const float64x2_t d1 = vsubq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    lo = vaddq_f64(lo, vmulq_f64(d0, d0));
    hi = vaddq_f64(hi, vmulq_f64(d1, d1));
  }
  double total = Combine(lo, hi);
  for (std::size_t i = body; i < n; ++i) {
    const double d = a[i] - b[i];
    const double p = d * d;
    total += p;
  }
  return total;
}

void MultiAxpy(const double* w, const double* const* src, std::size_t taps, double* out,
               std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    float64x2_t a0 = vld1q_f64(out + i), a1 = vld1q_f64(out + i + 2);
    float64x2_t a2 = vld1q_f64(out + i + 4), a3 = vld1q_f64(out + i + 6);
    for (std::size_t t = 0; t < taps; ++t) {
      const float64x2_t wt = vdupq_n_f64(w[t]);
      const double* s = src[t] + i;
      a0 = vaddq_f64(a0, vmulq_f64(wt, vld1q_f64(s)));
      a1 = vaddq_f64(a1, vmulq_f64(wt, vld1q_f64(s + 2)));
      a2 = vaddq_f64(a2, vmulq_f64(wt, vld1q_f64(s + 4)));
      a3 = vaddq_f64(a3, vmulq_f64(wt, vld1q_f64(s + 6)));
    }
    vst1q_f64(out + i, a0);
    vst1q_f64(out + i + 2, a1);
    vst1q_f64(out + i + 4, a2);
    vst1q_f64(out + i + 6, a3);
  }
  for (; i < n; ++i) {
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

constexpr KernelTable kNeonTable{
    Backend::kNeon, "neon", Axpy, Add, Sub, Mul, Scale, Accumulate, Sum, Dot, SumSqDiff,
    MultiAxpy, MultiDot,
};

}  // namespace

const KernelTable* NeonKernelsUnchecked() { return &kNeonTable; }

}  // namespace rstb::kernels
