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

// Layer primitives with explicit backward passes. Backward functions
// accumulate (+=) into parameter gradients and overwrite input gradients.

#include <cstdint>
#include <vector>

#include "psfuse/nn/tensor.hpp"

namespace psfuse::nn {

inline constexpr double kLeakySlope = 0.1;

enum class PoolKind { mean, max };

/// When false, layers skip caching activations for backward (inference).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Square kernel k in {1, 3}, zero padding k/2, stride 1 or 2.
struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;

  int out_size(int in) const { return (in + 2 * (kernel / 2) - kernel) / stride + 1; }
  int patch() const { return in_channels * kernel * kernel; }
};

/// weight: [out, in * k * k] row-major, bias: [out].
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvGeometry& g, const T* weight, const T* bias);

template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& dy, const ConvGeometry& g, const T* weight, T* dweight,
                     T* dbias, Tensor<T>* dx);

template <class T>
Tensor<T> upsample2x_forward(const Tensor<T>& x);
template <class T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy);

template <class T>
void leaky_relu_inplace(Tensor<T>& x);
/// Uses the activation output: y > 0 exactly where the input was > 0.
template <class T>
void leaky_relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy);

/// Pools [sets * set_size, C, H, W] over each set to [sets, C, H, W]. For max,
/// `argmax` receives the winning member index per output element (first wins
/// on ties).
template <class T>
Tensor<T> set_pool_forward(const Tensor<T>& x, int set_size, PoolKind kind, std::vector<std::int32_t>* argmax);

/// Adds the pooled gradient into dx (shape of the pooled input).
template <class T>
void set_pool_backward(const Tensor<T>& dg, int set_size, PoolKind kind, const std::vector<std::int32_t>& argmax,
                       Tensor<T>& dx);

/// Per image i of set s: [x_i ; g_s] along channels.
template <class T>
Tensor<T> concat_with_global(const Tensor<T>& x, const Tensor<T>& g, int set_size);

/// Splits the gradient of concat_with_global. dg is summed over set members.
template <class T>
void split_concat_grad(const Tensor<T>& dcat, int local_channels, int set_size, Tensor<T>& dx, Tensor<T>* dg);

/// Channel concatenation of tensors with equal n, h, w.
template <class T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts);

/// Per-pixel x / ||x|| over channels (norm floored at 1e-12).
template <class T>
Tensor<T> l2_normalize_forward(const Tensor<T>& x);
template <class T>
Tensor<T> l2_normalize_backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& dy);

/// [N, C, H, W] -> [N, C, 1, 1].
template <class T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x);
template <class T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& dy, int h, int w);

/// x: [N, in, 1, 1], weight [out, in], bias [out] -> [N, out, 1, 1].
template <class T>
Tensor<T> linear_forward(const Tensor<T>& x, int out, const T* weight, const T* bias);
template <class T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& dy, const T* weight, T* dweight, T* dbias);

/// Zero padding at the bottom/right edge to (h, w), and the inverse crop.
template <class T>
Tensor<T> pad_to(const Tensor<T>& x, int h, int w);
template <class T>
Tensor<T> crop_to(const Tensor<T>& x, int h, int w);

}  // namespace psfuse::nn
