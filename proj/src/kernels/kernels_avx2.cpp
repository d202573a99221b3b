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

// Compiled with -mavx2 (and without -mfma); only reached after a runtime
// CPU check in dispatch.cpp.

#include <immintrin.h>

#include "rstb/kernels.hpp"

namespace rstb::kernels {
namespace {

void Axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), p));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

template <typename Op, typename ScalarOp>
inline void Binary(const double* a, const double* b, double* out, std::size_t n, Op op,
                   ScalarOp sop) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, op(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

void Add(const double* a, const double* b, double* out, std::size_t n) {
  Binary(a, b, out, n, [](__m256d u, __m256d v) { return _mm256_add_pd(u, v); },
         [](double u, double v) { return u + v; });
}

void Sub(const double* a, const double* b, double* out, std::size_t n) {
  Binary(a, b, out, n, [](__m256d u, __m256d v) { return _mm256_sub_pd(u, v); },
         [](double u, double v) { return u - v; });
}

void Mul(const double* a, const double* b, double* out, std::size_t n) {
  Binary(a, b, out, n, [](__m256d u, __m256d v) { return _mm256_mul_pd(u, v); },
         [](double u, double v) { return u * v; });
}

void Scale(double s, const double* x, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(vs, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = s * x[i];
}

void Accumulate(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

// Horizontal combine in the canonical (l0 + l1) + (l2 + l3) order.
inline double Combine(__m256d acc) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double Sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double total = Combine(acc);
  for (std::size_t i = body; i < n; ++i) total += x[i];
  return total;
}

double Dot(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  double total = Combine(acc);
  for (std::size_t i = body; i < n; ++i) {
    const double p = x[i] * y[i];
    total += p;
  }
  return total;
}

double SumSqDiff(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double total = Combine(acc);
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
  // 16 outputs stay in registers while every tap streams past.
  for (; i + 16 <= n; i += 16) {
    __m256d a0 = _mm256_loadu_pd(out + i);
    __m256d a1 = _mm256_loadu_pd(out + i + 4);
    __m256d a2 = _mm256_loadu_pd(out + i + 8);
    __m256d a3 = _mm256_loadu_pd(out + i + 12);
    for (std::size_t t = 0; t < taps; ++t) {
      const __m256d wt = _mm256_set1_pd(w[t]);
      const double* s = src[t] + i;
      a0 = _mm256_add_pd(a0, _mm256_mul_pd(wt, _mm256_loadu_pd(s)));
      a1 = _mm256_add_pd(a1, _mm256_mul_pd(wt, _mm256_loadu_pd(s + 4)));
      a2 = _mm256_add_pd(a2, _mm256_mul_pd(wt, _mm256_loadu_pd(s + 8)));
      a3 = _mm256_add_pd(a3, _mm256_mul_pd(wt, _mm256_loadu_pd(s + 12)));
    }
    _mm256_storeu_pd(out + i, a0);
    _mm256_storeu_pd(out + i + 4, a1);
    _mm256_storeu_pd(out + i + 8, a2);
    _mm256_storeu_pd(out + i + 12, a3);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d a0 = _mm256_loadu_pd(out + i);
    for (std::size_t t = 0; t < taps; ++t) {
      a0 = _mm256_add_pd(a0, _mm256_mul_pd(_mm256_set1_pd(w[t]), _mm256_loadu_pd(src[t] + i)));
    }
    _mm256_storeu_pd(out + i, a0);
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
  const std::size_t body = n - n % 4;
  std::size_t t = 0;
  for (; t + 4 <= taps; t += 4) {
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
    for (std::size_t i = 0; i < body; i += 4) {
      const __m256d va = _mm256_loadu_pd(a + i);
      s0 = _mm256_add_pd(s0, _mm256_mul_pd(va, _mm256_loadu_pd(src[t] + i)));
      s1 = _mm256_add_pd(s1, _mm256_mul_pd(va, _mm256_loadu_pd(src[t + 1] + i)));
      s2 = _mm256_add_pd(s2, _mm256_mul_pd(va, _mm256_loadu_pd(src[t + 2] + i)));
      s3 = _mm256_add_pd(s3, _mm256_mul_pd(va, _mm256_loadu_pd(src[t + 3] + i)));
    }
    const __m256d sums[4] = {s0, s1, s2, s3};
    for (int j = 0; j < 4; ++j) {
      double total = Combine(sums[j]);
      for (std::size_t i = body; i < n; ++i) {
        const double p = a[i] * src[t + j][i];
        total += p;
      }
      acc[t + j] += total;
    }
  }
  for (; t < taps; ++t) acc[t] += Dot(a, src[t], n);
}

constexpr KernelTable kAvx2Table{
    Backend::kAvx2, "avx2", Axpy, Add, Sub, Mul, Scale, Accumulate, Sum, Dot, SumSqDiff,
    MultiAxpy, MultiDot,
};

}  // namespace

const KernelTable* Avx2KernelsUnchecked() { return &kAvx2Table; }

}  // namespace rstb::kernels
