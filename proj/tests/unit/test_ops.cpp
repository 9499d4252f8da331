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

#include <functional>
#include <random>

#include "doctest.h"
#include "psfuse/nn/ops.hpp"
#include "test_util.hpp"

using namespace psfuse;
using namespace psfuse::nn;
using T3 = Tensor<double>;

namespace {

double dot(const T3& a, const T3& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

// Central differences of f over every entry of `v`, compared against `analytic`.
double worst_fd_error(std::vector<double>& v, const std::function<double()>& f, const std::vector<double>& analytic,
                      double h = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double fp = f();
    v[i] = keep - h;
    const double fm = f();
    v[i] = keep;
    worst = std::max(worst, testutil::rel_error(analytic[i], (fp - fm) / (2 * h), 1e-4));
  }
  return worst;
}

std::vector<double> as_vec(const T3& t) { return {t.data(), t.data() + t.size()}; }

}  // namespace

TEST_CASE("conv2d gradients") {
  std::mt19937_64 rng(1);
  for (int kernel : {1, 3}) {
    for (int stride : {1, 2}) {
      ConvGeometry g{3, 4, kernel, stride};
      T3 x = testutil::random_tensor<double>(2, 3, 6, 6, rng);
      std::vector<double> w(4 * g.patch()), b(4);
      std::uniform_real_distribution<double> u(-1, 1);
      for (auto& v : w) v = u(rng);
      for (auto& v : b) v = u(rng);
      const int o = g.out_size(6);
      T3 r = testutil::random_tensor<double>(2, 4, o, o, rng);
      auto loss = [&] { return dot(conv2d_forward(x, g, w.data(), b.data()), r); };

      std::vector<double> dw(w.size(), 0.0), db(4, 0.0);
      T3 dx;
      conv2d_backward(x, r, g, w.data(), dw.data(), db.data(), &dx);
      INFO("kernel=" << kernel << " stride=" << stride);
      CHECK(worst_fd_error(w, loss, dw) < 1e-6);
      CHECK(worst_fd_error(b, loss, db) < 1e-6);
      std::vector<double> xv = as_vec(x);
      auto loss_x = [&] {
        std::copy(xv.begin(), xv.end(), x.data());
        return loss();
      };
      CHECK(worst_fd_error(xv, loss_x, as_vec(dx)) < 1e-6);

      // accumulation into parameter gradients
      std::vector<double> dw2 = dw;
      conv2d_backward(x, r, g, w.data(), dw2.data(), db.data(), static_cast<T3*>(nullptr));
      for (std::size_t i = 0; i < dw.size(); ++i) CHECK(dw2[i] == doctest::Approx(2 * dw[i]));
    }
  }
}

TEST_CASE("conv2d forward matches a direct loop") {
  std::mt19937_64 rng(2);
  ConvGeometry g{2, 3, 3, 2};
  T3 x = testutil::random_tensor<double>(1, 2, 8, 8, rng);
  std::vector<double> w(3 * g.patch()), b{0.1, -0.2, 0.3};
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : w) v = u(rng);
  const T3 y = conv2d_forward(x, g, w.data(), b.data());
  REQUIRE(y.h() == 4);
  for (int o = 0; o < 3; ++o) {
    for (int yy = 0; yy < 4; ++yy) {
      for (int xx = 0; xx < 4; ++xx) {
        double acc = b[o];
        for (int c = 0; c < 2; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = 2 * yy + ky - 1, ix = 2 * xx + kx - 1;
              if (iy < 0 || ix < 0 || iy >= 8 || ix >= 8) continue;
              acc += w[o * 18 + c * 9 + ky * 3 + kx] * x.at(0, c, iy, ix);
            }
        CHECK(y.at(0, o, yy, xx) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("set pooling, concat and their gradients") {
  std::mt19937_64 rng(3);
  const int sets = 2, m = 3;
  for (PoolKind kind : {PoolKind::mean, PoolKind::max}) {
    T3 x = testutil::random_tensor<double>(sets * m, 4, 3, 3, rng);
    T3 r = testutil::random_tensor<double>(sets, 4, 3, 3, rng);
    std::vector<std::int32_t> arg;
    const T3 p = set_pool_forward(x, m, kind, &arg);
    for (int s = 0; s < sets; ++s) {
      for (int c = 0; c < 4; ++c) {
        double mean = 0, mx = -1e9;
        for (int i = 0; i < m; ++i) {
          mean += x.at(s * m + i, c, 1, 2) / m;
          mx = std::max(mx, x.at(s * m + i, c, 1, 2));
        }
        CHECK(p.at(s, c, 1, 2) == doctest::Approx(kind == PoolKind::mean ? mean : mx));
      }
    }
    T3 dx(sets * m, 4, 3, 3);
    set_pool_backward(r, m, kind, arg, dx);
    std::vector<double> xv = as_vec(x);
    auto loss = [&] {
      std::copy(xv.begin(), xv.end(), x.data());
      std::vector<std::int32_t> a;
      return dot(set_pool_forward(x, m, kind, &a), r);
    };
    CHECK(worst_fd_error(xv, loss, as_vec(dx)) < 1e-6);
  }

  T3 x = testutil::random_tensor<double>(sets * m, 2, 3, 3, rng);
  T3 gl = testutil::random_tensor<double>(sets, 2, 3, 3, rng);
  const T3 cat = concat_with_global(x, gl, m);
  CHECK(cat.c() == 4);
  CHECK(cat.at(4, 1, 2, 0) == x.at(4, 1, 2, 0));
  CHECK(cat.at(4, 3, 2, 0) == gl.at(1, 1, 2, 0));
  T3 r = testutil::random_tensor<double>(sets * m, 4, 3, 3, rng);
  T3 dx, dg;
  split_concat_grad(r, 2, m, dx, &dg);
  std::vector<double> gv = as_vec(gl);
  auto loss_g = [&] {
    std::copy(gv.begin(), gv.end(), gl.data());
    return dot(concat_with_global(x, gl, m), r);
  };
  CHECK(worst_fd_error(gv, loss_g, as_vec(dg)) < 1e-6);
  CHECK(dx.at(1, 1, 0, 0) == r.at(1, 1, 0, 0));
}

TEST_CASE("pointwise and dense layer gradients") {
  std::mt19937_64 rng(4);

  SUBCASE("l2 normalize") {
    T3 x = testutil::random_tensor<double>(2, 3, 2, 2, rng);
    T3 r = testutil::random_tensor<double>(2, 3, 2, 2, rng);
    const T3 y = l2_normalize_forward(x);
    double norm = 0;
    for (int c = 0; c < 3; ++c) norm += y.at(1, c, 0, 1) * y.at(1, c, 0, 1);
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-14));
    const T3 dx = l2_normalize_backward(x, y, r);
    std::vector<double> xv = as_vec(x);
    auto loss = [&] {
      std::copy(xv.begin(), xv.end(), x.data());
      return dot(l2_normalize_forward(x), r);
    };
    CHECK(worst_fd_error(xv, loss, as_vec(dx)) < 1e-6);
  }

  SUBCASE("leaky relu") {
    T3 x = testutil::random_tensor<double>(1, 2, 4, 4, rng);
    T3 y = x;
    leaky_relu_inplace(y);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(y.data()[i] == (x.data()[i] > 0 ? x.data()[i] : kLeakySlope * x.data()[i]));
    }
    T3 r = testutil::random_tensor<double>(1, 2, 4, 4, rng);
    T3 d = r;
    leaky_relu_backward_inplace(y, d);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(d.data()[i] == doctest::Approx(r.data()[i] * (x.data()[i] > 0 ? 1.0 : kLeakySlope)));
    }
  }

  SUBCASE("upsample and global pooling") {
    T3 x = testutil::random_tensor<double>(2, 2, 3, 3, rng);
    const T3 up = upsample2x_forward(x);
    CHECK(up.h() == 6);
    CHECK(up.at(1, 1, 5, 4) == x.at(1, 1, 2, 2));
    T3 r = testutil::random_tensor<double>(2, 2, 6, 6, rng);
    std::vector<double> xv = as_vec(x);
    auto loss = [&] {
      std::copy(xv.begin(), xv.end(), x.data());
      return dot(upsample2x_forward(x), r);
    };
    CHECK(worst_fd_error(xv, loss, as_vec(upsample2x_backward(r))) < 1e-6);

    T3 rg = testutil::random_tensor<double>(2, 2, 1, 1, rng);
    auto loss_g = [&] {
      std::copy(xv.begin(), xv.end(), x.data());
      return dot(global_avg_pool_forward(x), rg);
    };
    CHECK(worst_fd_error(xv, loss_g, as_vec(global_avg_pool_backward(rg, 3, 3))) < 1e-6);
  }

  SUBCASE("linear") {
    T3 x = testutil::random_tensor<double>(3, 5, 1, 1, rng);
    std::vector<double> w(4 * 5), b(4);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : w) v = u(rng);
    for (auto& v : b) v = u(rng);
    T3 r = testutil::random_tensor<double>(3, 4, 1, 1, rng);
    auto loss = [&] { return dot(linear_forward(x, 4, w.data(), b.data()), r); };
    std::vector<double> dw(w.size(), 0.0), db(4, 0.0);
    const T3 dx = linear_backward(x, r, w.data(), dw.data(), db.data());
    CHECK(worst_fd_error(w, loss, dw) < 1e-6);
    CHECK(worst_fd_error(b, loss, db) < 1e-6);
    std::vector<double> xv = as_vec(x);
    auto loss_x = [&] {
      std::copy(xv.begin(), xv.end(), x.data());
      return loss();
    };
    CHECK(worst_fd_error(xv, loss_x, as_vec(dx)) < 1e-6);
  }
}

TEST_CASE("pad and crop are inverse") {
  std::mt19937_64 rng(5);
  T3 x = testutil::random_tensor<double>(2, 3, 5, 7, rng);
  const T3 p = pad_to(x, 8, 8);
  CHECK(p.h() == 8);
  CHECK(p.at(1, 2, 7, 7) == 0.0);
  const T3 c = crop_to(p, 5, 7);
  CHECK(as_vec(c) == as_vec(x));
}

TEST_CASE("no-grad guard nests") {
  CHECK(grad_enabled());
  {
    NoGradGuard a;
    CHECK_FALSE(grad_enabled());
    {
      NoGradGuard b;
      CHECK_FALSE(grad_enabled());
    }
    CHECK_FALSE(grad_enabled());
  }
  CHECK(grad_enabled());
}
