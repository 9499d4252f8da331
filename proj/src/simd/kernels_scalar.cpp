// Copyright 2026 The psfuse Authors.
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

#include <cmath>

#include "gemm_driver.hpp"
#include "kernel_table.hpp"

namespace psfuse::simd::detail {
namespace {

template <class T>
struct ScalarMicro {
  static constexpr int MR = 4;
  static constexpr int NR = 4;
  static void run(int kc, const T* a, const T* b, T* c, int ldc, T beta) {
    T acc[MR][NR] = {};
    for (int p = 0; p < kc; ++p) {
      for (int i = 0; i < MR; ++i)
        for (int j = 0; j < NR; ++j) acc[i][j] += a[p * MR + i] * b[p * NR + j];
    }
    for (int i = 0; i < MR; ++i)
      for (int j = 0; j < NR; ++j) {
        T& dst = c[static_cast<long>(i) * ldc + j];
        dst = (beta == T(0) ? T(0) : beta * dst) + acc[i][j];
      }
  }
};

template <class T>
void gemm_scalar(bool ta, bool tb, int m, int n, int k, const T* a, int lda, const T* b, int ldb, T beta, T* c,
                 int ldc) {
  gemm_blocked<T, ScalarMicro<T>>(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

template <class T>
void leaky_fwd(const T* x, T slope, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

template <class T>
void leaky_bwd(const T* x, const T* dy, T slope, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : slope * dy[i];
}

void adam_scalar(float* w, const float* g, float* m, float* v, const AdamStep& s, std::size_t n) {
  const float bc1 = 1.0f - std::pow(s.beta1, static_cast<float>(s.step));
  const float bc2 = 1.0f - std::pow(s.beta2, static_cast<float>(s.step));
  const float step_size = s.lr / bc1;
  const float inv_sqrt_bc2 = 1.0f / std::sqrt(bc2);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * g[i] * g[i];
    const float denom = std::sqrt(v[i]) * inv_sqrt_bc2 + s.eps;
    w[i] -= step_size * m[i] / denom;
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      &gemm_scalar<float>, &gemm_scalar<double>, &leaky_fwd<float>, &leaky_fwd<double>,
      &leaky_bwd<float>,   &leaky_bwd<double>,   &adam_scalar,
  };
  return table;
}

}  // namespace psfuse::simd::detail
