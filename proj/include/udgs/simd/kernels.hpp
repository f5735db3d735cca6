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

#pragma once

#include <cstddef>
#include <string_view>

// Dense inner loops used by the autodiff engine, the optimizer, and the SSIM
// filter. Each kernel has a scalar reference and an AVX2/FMA variant; the
// variant is picked once at startup from CPUID and can be forced with
// set_backend() or the UDGS_SIMD environment variable ("scalar" | "avx2").
//
// Matrices are row-major and densely packed (leading dimension == columns).

namespace udgs::simd {

enum class Backend { kScalar, kAvx2 };

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Backend backend;
  // c[m x n] = a[m x k] * b[k x n]      (accumulate: c += ...)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c, bool accumulate);
  // c[m x n] += a[m x k] * b[n x k]^T
  void (*gemm_nt_acc)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                      const double* b, double* c);
  // c[k x n] += a[m x k]^T * b[m x n]
  void (*gemm_tn_acc)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                      const double* b, double* c);
  double (*dot)(std::size_t n, const double* a, const double* b);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // dst[i] = sum_t taps[t] * src[i + t], i < n_out
  void (*correlate_valid)(std::size_t n_out, const double* src, const double* taps,
                          std::size_t n_taps, double* dst);
  void (*adam_update)(std::size_t n, double* param, const double* grad, double* m,
                      double* v, const AdamCoeffs& coeffs);
};

const KernelTable& scalar_kernels();
/// Returns nullptr when the binary was built without the AVX2 variant.
const KernelTable* avx2_kernels();

bool avx2_supported();
const KernelTable& kernels();
Backend active_backend();
/// Throws ValidationError when the requested backend is unavailable.
void set_backend(Backend backend);
Backend parse_backend(std::string_view name);
std::string_view backend_name(Backend backend);

}  // namespace udgs::simd
