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

#include "psfuse/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "psfuse/simd/kernels.hpp"

namespace psfuse::nn {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }


namespace {

// Patch rows of `col` are `ld` apart, so several images can share one matrix
// side by side.
template <class T>
void im2col(const T* x, int channels, int h, int w, const ConvGeometry& g, int ho, int wo, T* col, std::size_t ld) {
  const int k = g.kernel;
  const int pad = k / 2;
  const int s = g.stride;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s + ky - pad;
          T* dst = col + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          if (s == 1) {
            const int lo = std::max(0, pad - kx), hi = std::min(wo, w + pad - kx);
            std::fill(dst, dst + lo, T(0));
            std::copy(src + lo + kx - pad, src + hi + kx - pad, dst + lo);
            std::fill(dst + std::max(lo, hi), dst + wo, T(0));
            continue;
          }
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s + kx - pad;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
        col += ld;
      }
    }
  }
}

// Adds the patch matrix back into x, which must be zeroed by the caller.
template <class T>
void col2im(const T* col, int channels, int h, int w, const ConvGeometry& g, int ho, int wo, T* x, std::size_t ld) {
  const int k = g.kernel;
  const int pad = k / 2;
  const int s = g.stride;
  for (int c = 0; c < channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s + ky - pad;
          const T* src = col + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
        col += ld;
      }
    }
  }
}

// Images per GEMM: enough columns to fill the panels, bounded scratch.
int images_per_gemm(int n, int hw, int patch) {
  int chunk = std::clamp(2048 / std::max(hw, 1), 1, n);
  while (chunk > 1 && static_cast<std::size_t>(patch) * chunk * hw > (std::size_t{1} << 21)) --chunk;
  return chunk;
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1; }

template <class T>
std::vector<T>& scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

}  // namespace

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvGeometry& g, const T* weight, const T* bias) {
  if (x.c() != g.in_channels) {
    throw ShapeError("conv2d: expected " + std::to_string(g.in_channels) + " input channels, got " +
                     std::to_string(x.c()));
  }
  const int ho = g.out_size(x.h());
  const int wo = g.out_size(x.w());
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  Tensor<T> y(x.n(), g.out_channels, ho, wo);
  const int chunk = images_per_gemm(x.n(), static_cast<int>(hw), g.patch());
  auto& col = scratch<T>();
  std::vector<T> out;
  for (int i0 = 0; i0 < x.n(); i0 += chunk) {
    const int cn = std::min(chunk, x.n() - i0);
    const std::size_t cols = cn * hw;
    col.resize(static_cast<std::size_t>(g.patch()) * cols);
    out.resize(static_cast<std::size_t>(g.out_channels) * cols);
    for (int j = 0; j < cn; ++j) {
      if (is_pointwise(g)) {
        for (int c = 0; c < x.c(); ++c) std::copy_n(x.plane(i0 + j, c), hw, col.data() + c * cols + j * hw);
      } else {
        im2col(x.sample(i0 + j), x.c(), x.h(), x.w(), g, ho, wo, col.data() + j * hw, cols);
      }
    }
    simd::gemm<T>(false, false, g.out_channels, static_cast<int>(cols), g.patch(), weight, g.patch(), col.data(),
                  static_cast<int>(cols), T(0), out.data(), static_cast<int>(cols));
    for (int j = 0; j < cn; ++j)
      for (int o = 0; o < g.out_channels; ++o) {
        const T* src = out.data() + o * cols + j * hw;
        T* dst = y.plane(i0 + j, o);
        for (std::size_t p = 0; p < hw; ++p) dst[p] = src[p] + bias[o];
      }
  }
  return y;
}

template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& dy, const ConvGeometry& g, const T* weight, T* dweight,
                     T* dbias, Tensor<T>* dx) {
  const int ho = g.out_size(x.h());
  const int wo = g.out_size(x.w());
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  require_shape(dy, {x.n(), g.out_channels, ho, wo}, "conv2d backward");
  if (dx) *dx = Tensor<T>(x.n(), x.c(), x.h(), x.w());
  const int chunk = images_per_gemm(x.n(), static_cast<int>(hw), g.patch());
  auto& col = scratch<T>();
  std::vector<T> grad, dcol;
  for (int i0 = 0; i0 < x.n(); i0 += chunk) {
    const int cn = std::min(chunk, x.n() - i0);
    const std::size_t cols = cn * hw;
    const int icols = static_cast<int>(cols);
    col.resize(static_cast<std::size_t>(g.patch()) * cols);
    grad.resize(static_cast<std::size_t>(g.out_channels) * cols);
    for (int j = 0; j < cn; ++j) {
      for (int o = 0; o < g.out_channels; ++o) {
        const T* row = dy.plane(i0 + j, o);
        std::copy_n(row, hw, grad.data() + o * cols + j * hw);
        T acc = T(0);
        for (std::size_t p = 0; p < hw; ++p) acc += row[p];
        dbias[o] += acc;
      }
      if (is_pointwise(g)) {
        for (int c = 0; c < x.c(); ++c) std::copy_n(x.plane(i0 + j, c), hw, col.data() + c * cols + j * hw);
      } else {
        im2col(x.sample(i0 + j), x.c(), x.h(), x.w(), g, ho, wo, col.data() + j * hw, cols);
      }
    }
    simd::gemm<T>(false, true, g.out_channels, g.patch(), icols, grad.data(), icols, col.data(), icols, T(1), dweight,
                  g.patch());
    if (!dx) continue;
    dcol.resize(col.size());
    simd::gemm<T>(true, false, g.patch(), icols, g.out_channels, weight, g.patch(), grad.data(), icols, T(0),
                  dcol.data(), icols);
    for (int j = 0; j < cn; ++j) {
      if (is_pointwise(g)) {
        for (int c = 0; c < x.c(); ++c) std::copy_n(dcol.data() + c * cols + j * hw, hw, dx->plane(i0 + j, c));
      } else {
        col2im(dcol.data() + j * hw, x.c(), x.h(), x.w(), g, ho, wo, dx->sample(i0 + j), cols);
      }
    }
  }
}

template <class T>
Tensor<T> upsample2x_forward(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c(), 2 * x.h(), 2 * x.w());
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(i, c);
      T* dst = y.plane(i, c);
      const int w2 = 2 * x.w();
      for (int r = 0; r < x.h(); ++r) {
        T* row0 = dst + static_cast<std::size_t>(2 * r) * w2;
        for (int col = 0; col < x.w(); ++col) row0[2 * col] = row0[2 * col + 1] = src[r * x.w() + col];
        std::memcpy(row0 + w2, row0, sizeof(T) * w2);
      }
    }
  return y;
}

template <class T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  for (int i = 0; i < dy.n(); ++i)
    for (int c = 0; c < dy.c(); ++c) {
      const T* src = dy.plane(i, c);
      T* dst = dx.plane(i, c);
      for (int r = 0; r < dx.h(); ++r)
        for (int col = 0; col < dx.w(); ++col) {
          const T* a = src + static_cast<std::size_t>(2 * r) * dy.w() + 2 * col;
          const T* b = a + dy.w();
          dst[r * dx.w() + col] = (a[0] + a[1]) + (b[0] + b[1]);
        }
    }
  return dx;
}

template <class T>
void leaky_relu_inplace(Tensor<T>& x) {
  simd::leaky_relu_forward<T>(x.span(), static_cast<T>(kLeakySlope), x.span());
}

template <class T>
void leaky_relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
  simd::leaky_relu_backward<T>(y.span(), dy.span(), static_cast<T>(kLeakySlope), dy.span());
}

template <class T>
Tensor<T> set_pool_forward(const Tensor<T>& x, int set_size, PoolKind kind, std::vector<std::int32_t>* argmax) {
  if (set_size <= 0 || x.n() % set_size != 0) throw ShapeError("set pooling: batch is not a multiple of set size");
  const int sets = x.n() / set_size;
  const std::size_t len = x.sample_size();
  Tensor<T> g(sets, x.c(), x.h(), x.w());
  if (kind == PoolKind::max && argmax) argmax->assign(g.size(), 0);
  for (int s = 0; s < sets; ++s) {
    T* out = g.sample(s);
    std::copy(x.sample(s * set_size), x.sample(s * set_size) + len, out);
    if (kind == PoolKind::mean) {
      for (int m = 1; m < set_size; ++m) {
        const T* src = x.sample(s * set_size + m);
        for (std::size_t e = 0; e < len; ++e) out[e] += src[e];
      }
      const T inv = T(1) / static_cast<T>(set_size);
      for (std::size_t e = 0; e < len; ++e) out[e] *= inv;
    } else {
      std::int32_t* idx = argmax ? argmax->data() + s * len : nullptr;
      for (int m = 1; m < set_size; ++m) {
        const T* src = x.sample(s * set_size + m);
        for (std::size_t e = 0; e < len; ++e) {
          if (src[e] > out[e]) {
            out[e] = src[e];
            if (idx) idx[e] = m;
          }
        }
      }
    }
  }
  return g;
}

template <class T>
void set_pool_backward(const Tensor<T>& dg, int set_size, PoolKind kind, const std::vector<std::int32_t>& argmax,
                       Tensor<T>& dx) {
  const std::size_t len = dg.sample_size();
  if (dx.n() != dg.n() * set_size || dx.sample_size() != len) throw ShapeError("set pooling backward: shape mismatch");
  for (int s = 0; s < dg.n(); ++s) {
    const T* src = dg.sample(s);
    if (kind == PoolKind::mean) {
      const T inv = T(1) / static_cast<T>(set_size);
      for (int m = 0; m < set_size; ++m) {
        T* dst = dx.sample(s * set_size + m);
        for (std::size_t e = 0; e < len; ++e) dst[e] += src[e] * inv;
      }
    } else {
      const std::int32_t* idx = argmax.data() + s * len;
      for (std::size_t e = 0; e < len; ++e) dx.sample(s * set_size + idx[e])[e] += src[e];
    }
  }
}

template <class T>
Tensor<T> concat_with_global(const Tensor<T>& x, const Tensor<T>& g, int set_size) {
  if (g.n() * set_size != x.n() || g.c() != x.c() || g.h() != x.h() || g.w() != x.w()) {
    throw ShapeError("fusion concat: global tensor does not match local features");
  }
  Tensor<T> out(x.n(), 2 * x.c(), x.h(), x.w());
  const std::size_t len = x.sample_size();
  for (int i = 0; i < x.n(); ++i) {
    std::copy(x.sample(i), x.sample(i) + len, out.sample(i));
    const T* gs = g.sample(i / set_size);
    std::copy(gs, gs + len, out.sample(i) + len);
  }
  return out;
}

template <class T>
void split_concat_grad(const Tensor<T>& dcat, int local_channels, int set_size, Tensor<T>& dx, Tensor<T>* dg) {
  const int n = dcat.n();
  dx = Tensor<T>(n, local_channels, dcat.h(), dcat.w());
  const std::size_t len = dx.sample_size();
  if (dg) *dg = Tensor<T>(n / set_size, local_channels, dcat.h(), dcat.w());
  for (int i = 0; i < n; ++i) {
    std::copy(dcat.sample(i), dcat.sample(i) + len, dx.sample(i));
    if (dg) {
      const T* src = dcat.sample(i) + len;
      T* dst = dg->sample(i / set_size);
      for (std::size_t e = 0; e < len; ++e) dst[e] += src[e];
    }
  }
}

template <class T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const auto& first = *parts.front();
  int channels = 0;
  for (const auto* p : parts) {
    if (p->n() != first.n() || p->h() != first.h() || p->w() != first.w()) {
      throw ShapeError("channel concat: tensors disagree in n/h/w");
    }
    channels += p->c();
  }
  Tensor<T> out(first.n(), channels, first.h(), first.w());
  for (int i = 0; i < first.n(); ++i) {
    T* dst = out.sample(i);
    for (const auto* p : parts) {
      dst = std::copy(p->sample(i), p->sample(i) + p->sample_size(), dst);
    }
  }
  return out;
}

template <class T>
Tensor<T> l2_normalize_forward(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c(), x.h(), x.w());
  const std::size_t hw = x.plane_size();
  for (int i = 0; i < x.n(); ++i)
    for (std::size_t p = 0; p < hw; ++p) {
      T ss = T(0);
      for (int c = 0; c < x.c(); ++c) ss += x.plane(i, c)[p] * x.plane(i, c)[p];
      const T inv = T(1) / std::max(std::sqrt(ss), static_cast<T>(1e-12));
      for (int c = 0; c < x.c(); ++c) y.plane(i, c)[p] = x.plane(i, c)[p] * inv;
    }
  return y;
}

template <class T>
Tensor<T> l2_normalize_backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(x.n(), x.c(), x.h(), x.w());
  const std::size_t hw = x.plane_size();
  for (int i = 0; i < x.n(); ++i)
    for (std::size_t p = 0; p < hw; ++p) {
      T ss = T(0);
      T ydy = T(0);
      for (int c = 0; c < x.c(); ++c) {
        ss += x.plane(i, c)[p] * x.plane(i, c)[p];
        ydy += y.plane(i, c)[p] * dy.plane(i, c)[p];
      }
      const T inv = T(1) / std::max(std::sqrt(ss), static_cast<T>(1e-12));
      for (int c = 0; c < x.c(); ++c) dx.plane(i, c)[p] = (dy.plane(i, c)[p] - y.plane(i, c)[p] * ydy) * inv;
    }
  return dx;
}

template <class T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c(), 1, 1);
  const std::size_t hw = x.plane_size();
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c) {
      T acc = T(0);
      const T* src = x.plane(i, c);
      for (std::size_t p = 0; p < hw; ++p) acc += src[p];
      y.at(i, c, 0, 0) = acc / static_cast<T>(hw);
    }
  return y;
}

template <class T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& dy, int h, int w) {
  Tensor<T> dx(dy.n(), dy.c(), h, w);
  const T inv = T(1) / static_cast<T>(h * w);
  for (int i = 0; i < dy.n(); ++i)
    for (int c = 0; c < dy.c(); ++c) {
      T* dst = dx.plane(i, c);
      std::fill(dst, dst + dx.plane_size(), dy.at(i, c, 0, 0) * inv);
    }
  return dx;
}

template <class T>
Tensor<T> linear_forward(const Tensor<T>& x, int out, const T* weight, const T* bias) {
  const int in = static_cast<int>(x.sample_size());
  Tensor<T> y(x.n(), out, 1, 1);
  for (int i = 0; i < x.n(); ++i) std::copy(bias, bias + out, y.sample(i));
  simd::gemm<T>(false, true, x.n(), out, in, x.data(), in, weight, in, T(1), y.data(), out);
  return y;
}

template <class T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& dy, const T* weight, T* dweight, T* dbias) {
  const int in = static_cast<int>(x.sample_size());
  const int out = dy.c();
  for (int i = 0; i < x.n(); ++i)
    for (int o = 0; o < out; ++o) dbias[o] += dy.sample(i)[o];
  simd::gemm<T>(true, false, out, in, x.n(), dy.data(), out, x.data(), in, T(1), dweight, in);
  Tensor<T> dx(x.n(), x.c(), x.h(), x.w());
  simd::gemm<T>(false, false, x.n(), in, out, dy.data(), out, weight, in, T(0), dx.data(), in);
  return dx;
}

template <class T>
Tensor<T> pad_to(const Tensor<T>& x, int h, int w) {
  if (h == x.h() && w == x.w()) return x;
  Tensor<T> y(x.n(), x.c(), h, w);
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c)
      for (int r = 0; r < x.h(); ++r) std::copy_n(x.plane(i, c) + r * x.w(), x.w(), y.plane(i, c) + r * w);
  return y;
}

template <class T>
Tensor<T> crop_to(const Tensor<T>& x, int h, int w) {
  if (h == x.h() && w == x.w()) return x;
  Tensor<T> y(x.n(), x.c(), h, w);
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c)
      for (int r = 0; r < h; ++r) std::copy_n(x.plane(i, c) + r * x.w(), w, y.plane(i, c) + r * w);
  return y;
}

#define PSFUSE_INSTANTIATE_OPS(T)                                                                                  \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const ConvGeometry&, const T*, const T*);                   \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const ConvGeometry&, const T*, T*, T*,        \
                                Tensor<T>*);                                                                      \
  template Tensor<T> upsample2x_forward(const Tensor<T>&);                                                        \
  template Tensor<T> upsample2x_backward(const Tensor<T>&);                                                       \
  template void leaky_relu_inplace(Tensor<T>&);                                                                   \
  template void leaky_relu_backward_inplace(const Tensor<T>&, Tensor<T>&);                                        \
  template Tensor<T> set_pool_forward(const Tensor<T>&, int, PoolKind, std::vector<std::int32_t>*);               \
  template void set_pool_backward(const Tensor<T>&, int, PoolKind, const std::vector<std::int32_t>&, Tensor<T>&); \
  template Tensor<T> concat_with_global(const Tensor<T>&, const Tensor<T>&, int);                                 \
  template void split_concat_grad(const Tensor<T>&, int, int, Tensor<T>&, Tensor<T>*);                            \
  template Tensor<T> concat_channels(const std::vector<const Tensor<T>*>&);                                        \
  template Tensor<T> l2_normalize_forward(const Tensor<T>&);                                                      \
  template Tensor<T> l2_normalize_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> global_avg_pool_forward(const Tensor<T>&);                                                   \
  template Tensor<T> global_avg_pool_backward(const Tensor<T>&, int, int);                                        \
  template Tensor<T> linear_forward(const Tensor<T>&, int, const T*, const T*);                                   \
  template Tensor<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const T*, T*, T*);                       \
  template Tensor<T> pad_to(const Tensor<T>&, int, int);                                                          \
  template Tensor<T> crop_to(const Tensor<T>&, int, int);

PSFUSE_INSTANTIATE_OPS(float)
PSFUSE_INSTANTIATE_OPS(double)

#undef PSFUSE_INSTANTIATE_OPS

}  // namespace psfuse::nn
