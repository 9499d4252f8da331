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

// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "gemm_driver.hpp"
#include "kernel_table.hpp"

namespace psfuse::simd::detail {
namespace {

struct MicroF32 {
  static constexpr int MR = 6;
  static constexpr int NR = 16;
  static void run(int kc, const float* a, const float* b, float* c, int ldc, float beta) {
    __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
    __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
    __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
    __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
    __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
    __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
    for (int p = 0; p < kc; ++p) {
      const __m256 b0 = _mm256_loadu_ps(b);
      const __m256 b1 = _mm256_loadu_ps(b + 8);
      __m256 av = _mm256_broadcast_ss(a + 0);
      c00 = _mm256_fmadd_ps(av, b0, c00);
      c01 = _mm256_fmadd_ps(av, b1, c01);
      av = _mm256_broadcast_ss(a + 1);
      c10 = _mm256_fmadd_ps(av, b0, c10);
      c11 = _mm256_fmadd_ps(av, b1, c11);
      av = _mm256_broadcast_ss(a + 2);
      c20 = _mm256_fmadd_ps(av, b0, c20);
      c21 = _mm256_fmadd_ps(av, b1, c21);
      av = _mm256_broadcast_ss(a + 3);
      c30 = _mm256_fmadd_ps(av, b0, c30);
      c31 = _mm256_fmadd_ps(av, b1, c31);
      av = _mm256_broadcast_ss(a + 4);
      c40 = _mm256_fmadd_ps(av, b0, c40);
      c41 = _mm256_fmadd_ps(av, b1, c41);
      av = _mm256_broadcast_ss(a + 5);
      c50 = _mm256_fmadd_ps(av, b0, c50);
      c51 = _mm256_fmadd_ps(av, b1, c51);
      a += MR;
      b += NR;
    }
    const __m256 acc[MR][2] = {{c00, c01}, {c10, c11}, {c20, c21}, {c30, c31}, {c40, c41}, {c50, c51}};
    if (beta == 0.0f) {
      for (int i = 0; i < MR; ++i) {
        _mm256_storeu_ps(c + i * ldc, acc[i][0]);
        _mm256_storeu_ps(c + i * ldc + 8, acc[i][1]);
      }
    } else {
      const __m256 bv = _mm256_set1_ps(beta);
      for (int i = 0; i < MR; ++i) {
        float* row = c + i * ldc;
        _mm256_storeu_ps(row, _mm256_fmadd_ps(bv, _mm256_loadu_ps(row), acc[i][0]));
        _mm256_storeu_ps(row + 8, _mm256_fmadd_ps(bv, _mm256_loadu_ps(row + 8), acc[i][1]));
      }
    }
  }
};

struct MicroF64 {
  static constexpr int MR = 6;
  static constexpr int NR = 8;
  static void run(int kc, const double* a, const double* b, double* c, int ldc, double beta) {
    __m256d acc[MR][2];
    for (auto& row : acc) row[0] = row[1] = _mm256_setzero_pd();
    for (int p = 0; p < kc; ++p) {
      const __m256d b0 = _mm256_loadu_pd(b);
      const __m256d b1 = _mm256_loadu_pd(b + 4);
#pragma GCC unroll 6
      for (int i = 0; i < MR; ++i) {
        const __m256d av = _mm256_broadcast_sd(a + i);
        acc[i][0] = _mm256_fmadd_pd(av, b0, acc[i][0]);
        acc[i][1] = _mm256_fmadd_pd(av, b1, acc[i][1]);
      }
      a += MR;
      b += NR;
    }
    const __m256d bv = _mm256_set1_pd(beta);
    for (int i = 0; i < MR; ++i) {
      double* row = c + i * ldc;
      if (beta == 0.0) {
        _mm256_storeu_pd(row, acc[i][0]);
        _mm256_storeu_pd(row + 4, acc[i][1]);
      } else {
        _mm256_storeu_pd(row, _mm256_fmadd_pd(bv, _mm256_loadu_pd(row), acc[i][0]));
        _mm256_storeu_pd(row + 4, _mm256_fmadd_pd(bv, _mm256_loadu_pd(row + 4), acc[i][1]));
      }
    }
  }
};

void sgemm(bool ta, bool tb, int m, int n, int k, const float* a, int lda, const float* b, int ldb, float beta,
           float* c, int ldc) {
  gemm_blocked<float, MicroF32>(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

void dgemm(bool ta, bool tb, int m, int n, int k, const double* a, int lda, const double* b, int ldb, double beta,
           double* c, int ldc) {
  gemm_blocked<double, MicroF64>(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

void leaky_fwd_f(const float* x, float slope, float* y, std::size_t n) {
  const __m256 s = _mm256_set1_ps(slope);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    _mm256_storeu_ps(y + i, _mm256_max_ps(v, _mm256_mul_ps(v, s)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void leaky_fwd_d(const double* x, double slope, double* y, std::size_t n) {
  const __m256d s = _mm256_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(y + i, _mm256_max_pd(v, _mm256_mul_pd(v, s)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_bwd_f(const float* x, const float* dy, float slope, float* dx, std::size_t n) {
  const __m256 s = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(dy + i);
    const __m256 pos = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_blendv_ps(_mm256_mul_ps(g, s), g, pos));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : slope * dy[i];
}

void leaky_bwd_d(const double* x, const double* dy, double slope, double* dx, std::size_t n) {
  const __m256d s = _mm256_set1_pd(slope);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(dy + i);
    const __m256d pos = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(dx + i, _mm256_blendv_pd(_mm256_mul_pd(g, s), g, pos));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : slope * dy[i];
}

void adam(float* w, const float* g, float* m, float* v, const AdamStep& s, std::size_t n) {
  const float bc1 = 1.0f - std::pow(s.beta1, static_cast<float>(s.step));
  const float bc2 = 1.0f - std::pow(s.beta2, static_cast<float>(s.step));
  const float step_size = s.lr / bc1;
  const float inv_sqrt_bc2 = 1.0f / std::sqrt(bc2);
  const __m256 b1 = _mm256_set1_ps(s.beta1), omb1 = _mm256_set1_ps(1.0f - s.beta1);
  const __m256 b2 = _mm256_set1_ps(s.beta2), omb2 = _mm256_set1_ps(1.0f - s.beta2);
  const __m256 eps = _mm256_set1_ps(s.eps), ss = _mm256_set1_ps(step_size), ib = _mm256_set1_ps(inv_sqrt_bc2);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    const __m256 mv = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(omb1, gv));
    const __m256 vv =
        _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)), _mm256_mul_ps(omb2, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 denom = _mm256_add_ps(_mm256_mul_ps(_mm256_sqrt_ps(vv), ib), eps);
    const __m256 upd = _mm256_div_ps(_mm256_mul_ps(ss, mv), denom);
    _mm256_storeu_ps(w + i, _mm256_sub_ps(_mm256_loadu_ps(w + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * g[i] * g[i];
    w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + s.eps);
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{&sgemm, &dgemm, &leaky_fwd_f, &leaky_fwd_d, &leaky_bwd_f, &leaky_bwd_d, &adam};
  return table;
}

}  // namespace psfuse::simd::detail
