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

#include <cstddef>
#include <span>
#include <string_view>

namespace psfuse::simd {

/// Instruction sets with a dedicated kernel build. Every kernel has a scalar
/// reference; vector variants must agree with it up to rounding.
enum class Isa { scalar, avx2, avx512 };

std::string_view isa_name(Isa isa);
/// Parses "scalar", "avx2" or "avx512"; throws ConfigError otherwise.
Isa parse_isa(std::string_view name);
bool isa_supported(Isa isa);
/// Widest supported ISA, or the one named by PSFUSE_ISA when set.
Isa default_isa();
Isa active_isa();
/// Throws ConfigError when the CPU lacks `isa`.
void set_active_isa(Isa isa);

class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

/// Row-major C(m x n) = op(A) * op(B) + beta * C, where op(A) is m x k and
/// op(B) is k x n. With beta == 0, C is write-only.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, int lda, const T* b, int ldb, T beta, T* c,
          int ldc);

/// y = x > 0 ? x : slope * x, for 0 <= slope < 1. In-place allowed.
template <class T>
void leaky_relu_forward(std::span<const T> x, T slope, std::span<T> y);

/// dx = dy * (x > 0 ? 1 : slope). In-place on dy allowed.
template <class T>
void leaky_relu_backward(std::span<const T> x, std::span<const T> dy, T slope, std::span<T> dx);

struct AdamStep {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  long step = 1;  // 1-based, for bias correction
};

/// One Adam update with bias correction, in place on w, m, v.
void adam_update(std::span<float> w, std::span<const float> g, std::span<float> m, std::span<float> v,
                 const AdamStep& s);

}  // namespace psfuse::simd
