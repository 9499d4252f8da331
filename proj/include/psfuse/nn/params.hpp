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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "psfuse/core/errors.hpp"

namespace psfuse::nn {

template <class T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  std::size_t size() const { return value.size(); }
  /// Product of all dimensions but the first.
  int fan_in() const;
};

/// Named parameter tensors in registration order. Indices stay valid for the
/// lifetime of the set.
template <class T>
class ParamSet {
 public:
  std::size_t add(std::string name, std::vector<int> shape);
  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws ConfigError when missing.
  std::size_t index(std::string_view name) const;

  Param<T>& operator[](std::size_t i) { return params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return params_[i]; }
  std::size_t count() const { return params_.size(); }
  std::size_t total_values() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  /// He-uniform weights, zero biases (parameters whose name ends in "bias").
  /// Only parameters whose name starts with `prefix` are touched.
  void init_he_uniform(std::uint64_t seed, std::string_view prefix = "");
  /// Hash of names and shapes.
  std::string architecture_fingerprint(std::string_view prefix = "") const;
  /// Hash of names, shapes and values.
  std::string content_fingerprint() const;
  double grad_norm() const;
  void scale_grad(T factor);
  bool all_finite() const;

  /// Copies values for every parameter present in both sets with equal shape.
  /// Throws ShapeError on a shape disagreement. Returns the number copied.
  template <class U>
  std::size_t load_from(const ParamSet<U>& other);

 private:
  std::vector<Param<T>> params_;
  std::map<std::string, std::size_t, std::less<>> by_name_;
};

template <class T>
template <class U>
std::size_t ParamSet<T>::load_from(const ParamSet<U>& other) {
  std::size_t copied = 0;
  for (const auto& src : other) {
    auto idx = find(src.name);
    if (!idx) continue;
    auto& dst = params_[*idx];
    if (dst.shape != src.shape) throw ShapeError("parameter " + src.name + " has mismatching shape");
    for (std::size_t i = 0; i < dst.value.size(); ++i) dst.value[i] = static_cast<T>(src.value[i]);
    ++copied;
  }
  return copied;
}

}  // namespace psfuse::nn
