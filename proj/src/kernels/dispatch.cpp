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

#include <atomic>
#include <cstdlib>
#include <string>

#include "rstb/kernels.hpp"

namespace rstb::kernels {

#if defined(RSTB_HAVE_AVX2)
const KernelTable* Avx2KernelsUnchecked();
#endif
#if defined(RSTB_HAVE_NEON)
const KernelTable* NeonKernelsUnchecked();
#endif

const KernelTable* Avx2Kernels() {
#if defined(RSTB_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? Avx2KernelsUnchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* NeonKernels() {
#if defined(RSTB_HAVE_NEON)
  // Advanced SIMD is mandatory on AArch64.
  return NeonKernelsUnchecked();
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* Lookup(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return &ScalarKernels();
    case Backend::kAvx2:
      return Avx2Kernels();
    case Backend::kNeon:
      return NeonKernels();
  }
  return nullptr;
}

const KernelTable* Best() {
  if (const auto* t = Avx2Kernels()) return t;
  if (const auto* t = NeonKernels()) return t;
  return &ScalarKernels();
}

const KernelTable* Initial() {
  const char* env = std::getenv("RSTB_SIMD");
  const std::string want = env ? env : "auto";
  const KernelTable* table = nullptr;
  if (want == "scalar") table = Lookup(Backend::kScalar);
  if (want == "avx2") table = Lookup(Backend::kAvx2);
  if (want == "neon") table = Lookup(Backend::kNeon);
  return table ? table : Best();
}

std::atomic<const KernelTable*>& Slot() {
  static std::atomic<const KernelTable*> slot{Initial()};
  return slot;
}

}  // namespace

const KernelTable& Active() { return *Slot().load(std::memory_order_acquire); }

bool SetBackend(Backend backend) {
  const KernelTable* table = Lookup(backend);
  if (!table) return false;
  Slot().store(table, std::memory_order_release);
  return true;
}

std::string_view BackendName(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

}  // namespace rstb::kernels
