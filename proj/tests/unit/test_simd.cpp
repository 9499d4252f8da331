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

#include <random>
#include <vector>

#include "doctest.h"
#include "psfuse/core/errors.hpp"
#include "psfuse/simd/kernels.hpp"
#include "test_util.hpp"

using namespace psfuse;
using simd::Isa;

namespace {

std::vector<Isa> available() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512}) {
    if (simd::isa_supported(isa)) out.push_back(isa);
  }
  return out;
}

// Plain triple loop in long double.
template <class T>
std::vector<T> naive_gemm(bool ta, bool tb, int m, int n, int k, const std::vector<T>& a, int lda,
                          const std::vector<T>& b, int ldb, T beta, const std::vector<T>& c0, int ldc) {
  std::vector<T> c = c0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      long double acc = 0;
      for (int p = 0; p < k; ++p) {
        const T av = ta ? a[p * lda + i] : a[i * lda + p];
        const T bv = tb ? b[j * ldb + p] : b[p * ldb + j];
        acc += static_cast<long double>(av) * bv;
      }
      const T prev = beta == T(0) ? T(0) : beta * c0[i * ldc + j];
      c[i * ldc + j] = static_cast<T>(acc + prev);
    }
  }
  return c;
}

template <class T>
void check_gemm(Isa isa, double tol) {
  simd::ScopedIsa scope(isa);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  const int shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {17, 33, 9}, {64, 64, 64}, {31, 100, 288}, {96, 1, 40}, {5, 129, 3}};
  for (const auto& s : shapes) {
    const int m = s[0], n = s[1], k = s[2];
    for (int mode = 0; mode < 4; ++mode) {
      const bool ta = mode & 1, tb = mode & 2;
      const int lda = (ta ? m : k) + 2, ldb = (tb ? k : n) + 1, ldc = n + 3;
      std::vector<T> a(static_cast<std::size_t>(ta ? k : m) * lda), b(static_cast<std::size_t>(tb ? n : k) * ldb),
          c(static_cast<std::size_t>(m) * ldc);
      for (auto& v : a) v = static_cast<T>(u(rng));
      for (auto& v : b) v = static_cast<T>(u(rng));
      for (auto& v : c) v = static_cast<T>(u(rng));
      for (T beta : {T(0), T(1), T(0.5)}) {
        const auto expect = naive_gemm<T>(ta, tb, m, n, k, a, lda, b, ldb, beta, c, ldc);
        auto got = c;
        if (beta == T(0)) {
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) got[i * ldc + j] = std::numeric_limits<T>::quiet_NaN();
        }
        simd::gemm<T>(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, beta, got.data(), ldc);
        double worst = 0;
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) {
            worst = std::max(worst, std::abs(static_cast<double>(got[i * ldc + j]) - expect[i * ldc + j]));
          }
          // padding columns untouched
          for (int j = n; j < ldc && i + 1 < m; ++j) CHECK(got[i * ldc + j] == c[i * ldc + j]);
        }
        INFO("isa=" << simd::isa_name(isa) << " m=" << m << " n=" << n << " k=" << k << " ta=" << ta
                    << " tb=" << tb);
        CHECK(worst <= tol * std::sqrt(static_cast<double>(k)));
      }
    }
  }
}

}  // namespace

TEST_CASE("isa names parse and scalar is always present") {
  CHECK(simd::isa_supported(Isa::scalar));
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::avx512}) CHECK(simd::parse_isa(simd::isa_name(isa)) == isa);
  CHECK_THROWS_AS(simd::parse_isa("sse9"), ConfigError);
  {
    simd::ScopedIsa scope(Isa::scalar);
    CHECK(simd::active_isa() == Isa::scalar);
  }
  CHECK(simd::active_isa() == simd::default_isa());
}

TEST_CASE("gemm matches the naive product on every isa") {
  for (Isa isa : available()) {
    check_gemm<float>(isa, 2e-6);
    check_gemm<double>(isa, 1e-14);
  }
}

TEST_CASE("vector kernels agree with scalar") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2, 2);
  const std::size_t n = 1037;
  std::vector<float> x(n), dy(n);
  for (auto& v : x) v = static_cast<float>(u(rng));
  for (auto& v : dy) v = static_cast<float>(u(rng));
  x[3] = 0.0f;

  std::vector<float> y_ref(n), dx_ref(n);
  {
    simd::ScopedIsa scope(Isa::scalar);
    simd::leaky_relu_forward<float>(x, 0.1f, y_ref);
    simd::leaky_relu_backward<float>(x, dy, 0.1f, dx_ref);
  }
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(y_ref[i] == (x[i] > 0 ? x[i] : 0.1f * x[i]));
    CHECK(dx_ref[i] == (x[i] > 0 ? dy[i] : 0.1f * dy[i]));
  }

  std::vector<float> w0(n), g(n);
  for (auto& v : w0) v = static_cast<float>(u(rng));
  for (auto& v : g) v = static_cast<float>(u(rng));
  simd::AdamStep step;
  step.step = 3;
  auto run_adam = [&](Isa isa) {
    simd::ScopedIsa scope(isa);
    std::vector<float> w = w0, m(n, 0.01f), v(n, 0.02f);
    simd::adam_update(w, g, m, v, step);
    return w;
  };
  const auto w_ref = run_adam(Isa::scalar);
  // oracle: textbook Adam in double
  for (std::size_t i = 0; i < n; ++i) {
    const double m = 0.9 * 0.01 + 0.1 * g[i];
    const double v = 0.999 * 0.02 + 0.001 * double(g[i]) * g[i];
    const double mh = m / (1 - std::pow(0.9, 3)), vh = v / (1 - std::pow(0.999, 3));
    CHECK(w_ref[i] == doctest::Approx(w0[i] - 1e-3 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-5));
  }

  for (Isa isa : available()) {
    simd::ScopedIsa scope(isa);
    std::vector<float> y(n), dx(n);
    simd::leaky_relu_forward<float>(x, 0.1f, y);
    simd::leaky_relu_backward<float>(x, dy, 0.1f, dx);
    CHECK(y == y_ref);
    CHECK(dx == dx_ref);
    std::vector<double> xd(x.begin(), x.end()), yd(n);
    simd::leaky_relu_forward<double>(xd, 0.1, yd);
    for (std::size_t i = 0; i < n; ++i) CHECK(yd[i] == (xd[i] > 0 ? xd[i] : 0.1 * xd[i]));
    const auto w = run_adam(isa);
    for (std::size_t i = 0; i < n; ++i) CHECK(w[i] == doctest::Approx(w_ref[i]).epsilon(1e-6));
  }
}
