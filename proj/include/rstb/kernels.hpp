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

// Data-parallel inner loops used by the tensor engine.
//
// Every backend produces bitwise-identical results to the scalar reference.
// Elementwise kernels are trivially order-free. Reductions follow one fixed
// association order that all backends reproduce:
//
//   lane j (0..3) accumulates elements 4k+j of the body, in order of k;
//   total = (lane0 + lane1) + (lane2 + lane3);
//   the n % 4 tail elements are then added to total sequentially.
//
// Products are never fused (no FMA), so a*b+c rounds twice everywhere.

#include <cstddef>
#include <string_view>

namespace rstb::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

struct KernelTable {
  Backend backend;
  const char* name;

  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // out[i] = a[i] + b[i]
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] - b[i]
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] * b[i]
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = s * x[i]
  void (*scale)(double s, const double* x, double* out, std::size_t n);
  // y[i] += x[i]
  void (*accumulate)(const double* x, double* y, std::size_t n);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*sum_sq_diff)(const double* a, const double* b, std::size_t n);

  // For each i < n: out[i] += w[0]*src[0][i], then += w[1]*src[1][i], ...
  // in tap order. Per element this is exactly `taps` sequential axpy calls.
  void (*multi_axpy)(const double* w, const double* const* src, std::size_t taps, double* out,
                     std::size_t n);
  // For each tap t: acc[t] += dot(a, src[t], n), dot in the canonical order.
  void (*multi_dot)(const double* a, const double* const* src, std::size_t taps, double* acc,
                    std::size_t n);
};

const KernelTable& ScalarKernels();

// Null when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* Avx2Kernels();
const KernelTable* NeonKernels();

// The table every op dispatches through. Chosen once on first use:
// RSTB_SIMD=scalar|avx2|neon|auto (default auto = best available).
const KernelTable& Active();

// Overrides the active table (tests and benchmarks). Returns false and leaves
// the selection unchanged if the backend is unavailable.
bool SetBackend(Backend backend);

std::string_view BackendName(Backend backend);

}  // namespace rstb::kernels
