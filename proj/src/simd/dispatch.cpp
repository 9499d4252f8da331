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

#include <atomic>
#include <cstdlib>
#include <string>

#include "kernel_table.hpp"
#include "psfuse/core/errors.hpp"
#include "psfuse/simd/kernels.hpp"

namespace psfuse::simd {

using detail::KernelTable;

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::avx512:
      return "avx512";
  }
  return "unknown";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "avx512") return Isa::avx512;
  throw ConfigError("unknown instruction set '" + std::string(name) + "' (expected scalar, avx2 or avx512)");
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
#if defined(PSFUSE_HAVE_X86_KERNELS)
    case Isa::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::avx512:
      return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    default:
      return false;
#endif
  }
  return false;
}

Isa default_isa() {
  if (const char* env = std::getenv("PSFUSE_ISA"); env && *env) {
    const Isa requested = parse_isa(env);
    if (isa_supported(requested)) return requested;
  }
  for (Isa isa : {Isa::avx512, Isa::avx2}) {
    if (isa_supported(isa)) return isa;
  }
  return Isa::scalar;
}

namespace {

const KernelTable& table_for(Isa isa) {
  switch (isa) {
#if defined(PSFUSE_HAVE_X86_KERNELS)
    case Isa::avx2:
      return detail::avx2_table();
    case Isa::avx512:
      return detail::avx512_table();
#endif
    default:
      return detail::scalar_table();
  }
}

struct ActiveState {
  std::atomic<Isa> isa{default_isa()};
  std::atomic<const KernelTable*> table{&table_for(isa.load())};
};

ActiveState& state() {
  static ActiveState s;
  return s;
}

const KernelTable& active() { return *state().table.load(std::memory_order_relaxed); }

}  // namespace

Isa active_isa() { return state().isa.load(); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) throw ConfigError("instruction set " + std::string(isa_name(isa)) + " is not supported");
  state().isa.store(isa);
  state().table.store(&table_for(isa));
}

template <>
void gemm<float>(bool ta, bool tb, int m, int n, int k, const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  active().sgemm(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

template <>
void gemm<double>(bool ta, bool tb, int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                  double beta, double* c, int ldc) {
  active().dgemm(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
}

namespace {
void check_same(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("kernel operand lengths differ");
}
}  // namespace

template <>
void leaky_relu_forward<float>(std::span<const float> x, float slope, std::span<float> y) {
  check_same(x.size(), y.size());
  active().leaky_fwd_f(x.data(), slope, y.data(), x.size());
}

template <>
void leaky_relu_forward<double>(std::span<const double> x, double slope, std::span<double> y) {
  check_same(x.size(), y.size());
  active().leaky_fwd_d(x.data(), slope, y.data(), x.size());
}

template <>
void leaky_relu_backward<float>(std::span<const float> x, std::span<const float> dy, float slope,
                                std::span<float> dx) {
  check_same(x.size(), dy.size());
  check_same(x.size(), dx.size());
  active().leaky_bwd_f(x.data(), dy.data(), slope, dx.data(), x.size());
}

template <>
void leaky_relu_backward<double>(std::span<const double> x, std::span<const double> dy, double slope,
                                 std::span<double> dx) {
  check_same(x.size(), dy.size());
  check_same(x.size(), dx.size());
  active().leaky_bwd_d(x.data(), dy.data(), slope, dx.data(), x.size());
}

void adam_update(std::span<float> w, std::span<const float> g, std::span<float> m, std::span<float> v,
                 const AdamStep& s) {
  check_same(w.size(), g.size());
  check_same(w.size(), m.size());
  check_same(w.size(), v.size());
  active().adam(w.data(), g.data(), m.data(), v.data(), s, w.size());
}

}  // namespace psfuse::simd
