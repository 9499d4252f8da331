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

#pragma once

// Internal: cache-blocked GEMM driver shared by every ISA. Operands are packed
// into MR-row / NR-column panels, and a microkernel multiplies one MR x NR tile
// over a kc-long slice. Edge tiles go through a scratch tile so microkernels
// never see partial shapes.

#include <algorithm>
#include <vector>

namespace psfuse::simd::detail {

inline constexpr int kGemmKc = 256;
inline constexpr int kGemmMc = 96;
inline constexpr int kGemmNc = 2048;

template <class T, class Micro>
void pack_a(bool trans, const T* a, int lda, int i0, int mc, int p0, int kc, T* dst) {
  constexpr int MR = Micro::MR;
  for (int ir = 0; ir < mc; ir += MR) {
    const int rows = std::min(MR, mc - ir);
    if (trans) {
      // Rows of op(A) are columns of A: each p reads MR contiguous values.
      for (int p = 0; p < kc; ++p) {
        const T* src = a + static_cast<long>(p0 + p) * lda + i0 + ir;
        for (int i = 0; i < MR; ++i) dst[p * MR + i] = i < rows ? src[i] : T(0);
      }
    } else {
      for (int i = 0; i < MR; ++i) {
        if (i < rows) {
          const T* src = a + static_cast<long>(i0 + ir + i) * lda + p0;
          for (int p = 0; p < kc; ++p) dst[p * MR + i] = src[p];
        } else {
          for (int p = 0; p < kc; ++p) dst[p * MR + i] = T(0);
        }
      }
    }
    dst += static_cast<long>(kc) * MR;
  }
}

template <class T, class Micro>
void pack_b(bool trans, const T* b, int ldb, int p0, int kc, int j0, int nc, T* dst) {
  constexpr int NR = Micro::NR;
  for (int jr = 0; jr < nc; jr += NR) {
    const int cols = std::min(NR, nc - jr);
    if (trans) {
      // Columns of op(B) are rows of B: read each along p.
      for (int j = 0; j < NR; ++j) {
        if (j < cols) {
          const T* src = b + static_cast<long>(j0 + jr + j) * ldb + p0;
          for (int p = 0; p < kc; ++p) dst[p * NR + j] = src[p];
        } else {
          for (int p = 0; p < kc; ++p) dst[p * NR + j] = T(0);
        }
      }
    } else {
      for (int p = 0; p < kc; ++p) {
        const T* src = b + static_cast<long>(p0 + p) * ldb + j0 + jr;
        for (int j = 0; j < NR; ++j) dst[p * NR + j] = j < cols ? src[j] : T(0);
      }
    }
    dst += static_cast<long>(kc) * NR;
  }
}

template <class T, class Micro>
void gemm_blocked(bool trans_a, bool trans_b, int m, int n, int k, const T* a, int lda, const T* b, int ldb, T beta,
                  T* c, int ldc) {
  constexpr int MR = Micro::MR;
  constexpr int NR = Micro::NR;
  static_assert(kGemmMc % MR == 0 && kGemmNc % NR == 0);
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        T& dst = c[static_cast<long>(i) * ldc + j];
        dst = beta == T(0) ? T(0) : beta * dst;
      }
    return;
  }
  thread_local std::vector<T> a_buf;
  thread_local std::vector<T> b_buf;
  a_buf.resize(static_cast<std::size_t>(kGemmMc) * kGemmKc);
  b_buf.resize(static_cast<std::size_t>(kGemmKc) * (kGemmNc + NR));
  alignas(64) T tile[MR * NR];

  for (int jc = 0; jc < n; jc += kGemmNc) {
    const int nc = std::min(kGemmNc, n - jc);
    for (int pc = 0; pc < k; pc += kGemmKc) {
      const int kc = std::min(kGemmKc, k - pc);
      const T beta_eff = pc == 0 ? beta : T(1);
      pack_b<T, Micro>(trans_b, b, ldb, pc, kc, jc, nc, b_buf.data());
      for (int ic = 0; ic < m; ic += kGemmMc) {
        const int mc = std::min(kGemmMc, m - ic);
        pack_a<T, Micro>(trans_a, a, lda, ic, mc, pc, kc, a_buf.data());
        for (int jr = 0; jr < nc; jr += NR) {
          const int cols = std::min(NR, nc - jr);
          const T* bp = b_buf.data() + static_cast<long>(jr / NR) * kc * NR;
          for (int ir = 0; ir < mc; ir += MR) {
            const int rows = std::min(MR, mc - ir);
            const T* ap = a_buf.data() + static_cast<long>(ir / MR) * kc * MR;
            T* cp = c + static_cast<long>(ic + ir) * ldc + jc + jr;
            if (rows == MR && cols == NR) {
              Micro::run(kc, ap, bp, cp, ldc, beta_eff);
            } else {
              Micro::run(kc, ap, bp, tile, NR, T(0));
              for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) {
                  T& dst = cp[static_cast<long>(i) * ldc + j];
                  dst = (beta_eff == T(0) ? T(0) : beta_eff * dst) + tile[i * NR + j];
                }
            }
          }
        }
      }
    }
  }
}

}  // namespace psfuse::simd::detail
