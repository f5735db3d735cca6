// Copyright 2026 The udgs Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <atomic>
#include <cstdlib>
#include <string>

#include "udgs/core/error.hpp"
#include "udgs/simd/kernels.hpp"

namespace udgs::simd {

#ifdef UDGS_HAVE_AVX2
const KernelTable& avx2_kernel_table();
#endif

const KernelTable* avx2_kernels() {
#ifdef UDGS_HAVE_AVX2
  return &avx2_kernel_table();
#else
  return nullptr;
#endif
}

bool avx2_supported() {
#if defined(UDGS_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported;
#else
  return false;
#endif
}

namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("UDGS_SIMD")) {
    if (std::string(env) == "scalar") return &scalar_kernels();
  }
  return avx2_supported() ? avx2_kernels() : &scalar_kernels();
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& kernels() { return *active().load(std::memory_order_relaxed); }

Backend active_backend() { return kernels().backend; }

void set_backend(Backend backend) {
  if (backend == Backend::kAvx2) {
    require(avx2_supported(), "AVX2/FMA kernels are not available on this machine/build");
    active().store(avx2_kernels());
  } else {
    active().store(&scalar_kernels());
  }
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::kScalar;
  if (name == "avx2") return Backend::kAvx2;
  if (name == "auto") return avx2_supported() ? Backend::kAvx2 : Backend::kScalar;
  throw ValidationError("unknown simd backend '" + std::string(name) + "'");
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

}  // namespace udgs::simd
