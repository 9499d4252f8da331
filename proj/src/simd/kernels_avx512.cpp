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

// Compiled with -mavx512f; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "gemm_driver.hpp"
#include "kernel_table.hpp"

namespace psfuse::simd::detail {
namespace {

struct MicroF32 {
  static constexpr int MR = 8;
  static constexpr int NR = 32;
  static void run(int kc, const float* a, const float* b, float* c, int ldc, float beta) {
    __m512 acc[MR][2];
    for (auto& row : acc) row[0] = row[1] = _mm512_setzero_ps();
    for (int p = 0; p < kc; ++p) {
      const __m512 b0 = _mm512_loadu_ps(b);
      const __m512 b1 = _mm512_loadu_ps(b + 16);
#pragma GCC unroll 8
      for (int i = 0; i < MR; ++i) {
        const __m512 av = _mm512_set1_ps(a[i]);
        acc[i][0] = _mm512_fmadd_ps(av, b0, acc[i][0]);
        acc[i][1] = _mm512_fmadd_ps(av, b1, acc[i][1]);
      }
      a += MR;
      b += NR;
    }
    const __m512 bv = _mm512_set1_ps(beta);
#pragma GCC unroll 8
    for (int i = 0; i < MR; ++i) {
      float* row = c + i * ldc;
      if (beta == 0.0f) {
        _mm512_storeu_ps(row, acc[i][0]);
        _mm512_storeu_ps(row + 16, acc[i][1]);
      } else {
        _mm512_storeu_ps(row, _mm512_fmadd_ps(bv, _mm512_loadu_ps(row), acc[i][0]));
        _mm512_storeu_ps(row + 16, _mm512_fmadd_ps(bv, _mm512_loadu_ps(row + 16), acc[i][1]));
      }
    }
  }
};

struct MicroF64 {
  static constexpr int MR = 8;
  static constexpr int NR = 16;
  static void run(int kc, const double* a, const double* b, double* c, int ldc, double beta) {
    __m512d acc[MR][2];
    for (auto& row : acc) row[0] = row[1] = _mm512_setzero_pd();
    for (int p = 0; p < kc; ++p) {
      const __m512d b0 = _mm512_loadu_pd(b);
      const __m512d b1 = _mm512_loadu_pd(b + 8);
#pragma GCC unroll 8
      for (int i = 0; i < MR; ++i) {
        const __m512d av = _mm512_set1_pd(a[i]);
        acc[i][0] = _mm512_fmadd_pd(av, b0, acc[i][0]);
        acc[i][1] = _mm512_fmadd_pd(av, b1, acc[i][1]);
      }
      a += MR;
      b += NR;
    }
    const __m512d bv = _mm512_set1_pd(beta);
#pragma GCC unroll 8
    for (int i = 0; i < MR; ++i) {
      double* row = c + i * ldc;
      if (beta == 0.0) {
        _mm512_storeu_pd(row, acc[i][0]);
        _mm512_storeu_pd(row + 8, acc[i][1]);
      } else {
        _mm512_storeu_pd(row, _mm512_fmadd_pd(bv, _mm512_loadu_pd(row), acc[i][0]));
        _mm512_storeu_pd(row + 8, _mm512_fmadd_pd(bv, _mm512_loadu_pd(row + 8), acc[i][1]));
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
  const __m512 s = _mm512_set1_ps(slope);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 v = _mm512_loadu_ps(x + i);
    _mm512_storeu_ps(y + i, _mm512_max_ps(v, _mm512_mul_ps(v, s)));
  }
  if (i < n) {
    const __mmask16 k = static_cast<__mmask16>((1u << (n - i)) - 1u);
    const __m512 v = _mm512_maskz_loadu_ps(k, x + i);
    _mm512_mask_storeu_ps(y + i, k, _mm512_max_ps(v, _mm512_mul_ps(v, s)));
  }
}

void leaky_fwd_d(const double* x, double slope, double* y, std::size_t n) {
  const __m512d s = _mm512_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d v = _mm512_loadu_pd(x + i);
    _mm512_storeu_pd(y + i, _mm512_max_pd(v, _mm512_mul_pd(v, s)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_bwd_f(const float* x, const float* dy, float slope, float* dx, std::size_t n) {
  const __m512 s = _mm512_set1_ps(slope);
  const __m512 zero = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 g = _mm512_loadu_ps(dy + i);
    const __mmask16 pos = _mm512_cmp_ps_mask(_mm512_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm512_storeu_ps(dx + i, _mm512_mask_blend_ps(pos, _mm512_mul_ps(g, s), g));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : slope * dy[i];
}

void leaky_bwd_d(const double* x, const double* dy, double slope, double* dx, std::size_t n) {
  const __m512d s = _mm512_set1_pd(slope);
  const __m512d zero = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d g = _mm512_loadu_pd(dy + i);
    const __mmask8 pos = _mm512_cmp_pd_mask(_mm512_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm512_storeu_pd(dx + i, _mm512_mask_blend_pd(pos, _mm512_mul_pd(g, s), g));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : slope * dy[i];
}

void adam(float* w, const float* g, float* m, float* v, const AdamStep& s, std::size_t n) {
  const float bc1 = 1.0f - std::pow(s.beta1, static_cast<float>(s.step));
  const float bc2 = 1.0f - std::pow(s.beta2, static_cast<float>(s.step));
  const float step_size = s.lr / bc1;
  const float inv_sqrt_bc2 = 1.0f / std::sqrt(bc2);
  const __m512 b1 = _mm512_set1_ps(s.beta1), omb1 = _mm512_set1_ps(1.0f - s.beta1);
  const __m512 b2 = _mm512_set1_ps(s.beta2), omb2 = _mm512_set1_ps(1.0f - s.beta2);
  const __m512 eps = _mm512_set1_ps(s.eps), ss = _mm512_set1_ps(step_size), ib = _mm512_set1_ps(inv_sqrt_bc2);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 gv = _mm512_loadu_ps(g + i);
    const __m512 mv = _mm512_add_ps(_mm512_mul_ps(b1, _mm512_loadu_ps(m + i)), _mm512_mul_ps(omb1, gv));
    const __m512 vv =
        _mm512_add_ps(_mm512_mul_ps(b2, _mm512_loadu_ps(v + i)), _mm512_mul_ps(omb2, _mm512_mul_ps(gv, gv)));
    _mm512_storeu_ps(m + i, mv);
    _mm512_storeu_ps(v + i, vv);
    const __m512 denom = _mm512_add_ps(_mm512_mul_ps(_mm512_sqrt_ps(vv), ib), eps);
    _mm512_storeu_ps(w + i, _mm512_sub_ps(_mm512_loadu_ps(w + i), _mm512_div_ps(_mm512_mul_ps(ss, mv), denom)));
  }
  for (; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * g[i] * g[i];
    w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + s.eps);
  }
}

}  // namespace

const KernelTable& avx512_table() {
  static const KernelTable table{&sgemm, &dgemm, &leaky_fwd_f, &leaky_fwd_d, &leaky_bwd_f, &leaky_bwd_d, &adam};
  return table;
}

}  // namespace psfuse::simd::detail
