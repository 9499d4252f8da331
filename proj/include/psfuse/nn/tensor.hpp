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

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "psfuse/core/errors.hpp"

namespace psfuse::nn {

/// Dense NCHW tensor. Image sets are stored with the images of one set in
/// consecutive n slots.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : n_(n), c_(c), h_(h), w_(w), data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }
  std::size_t size() const { return data_.size(); }
  std::array<int, 4> shape() const { return {n_, c_, h_, w_}; }
  bool same_shape(const Tensor& o) const { return shape() == o.shape(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  T* sample(int i) { return data_.data() + i * sample_size(); }
  const T* sample(int i) const { return data_.data() + i * sample_size(); }
  T* plane(int i, int ch) { return sample(i) + ch * plane_size(); }
  const T* plane(int i, int ch) const { return sample(i) + ch * plane_size(); }

  T& at(int i, int ch, int y, int x) { return data_[index(i, ch, y, x)]; }
  T at(int i, int ch, int y, int x) const { return data_[index(i, ch, y, x)]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(n_, c_, h_, w_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  std::string shape_string() const {
    return "[" + std::to_string(n_) + ", " + std::to_string(c_) + ", " + std::to_string(h_) + ", " +
           std::to_string(w_) + "]";
  }

 private:
  std::size_t index(int i, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(i) * c_ + ch) * h_ + y) * w_ + x;
  }
  int n_ = 0;
  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<T> data_;
};

template <class T>
void require_shape(const Tensor<T>& t, const std::array<int, 4>& shape, const char* what) {
  if (t.shape() != shape) {
    throw ShapeError(std::string(what) + ": unexpected tensor shape " + t.shape_string());
  }
}

}  // namespace psfuse::nn
