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

#include "psfuse/nn/params.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "psfuse/core/hash.hpp"
#include "psfuse/nn/ops.hpp"

namespace psfuse::nn {

template <class T>
int Param<T>::fan_in() const {
  int f = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) f *= shape[i];
  return f;
}

template <class T>
std::size_t ParamSet<T>::add(std::string name, std::vector<int> shape) {
  if (by_name_.count(name)) throw ConfigError("duplicate parameter name " + name);
  std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  Param<T> p{name, std::move(shape), std::vector<T>(n, T(0)), std::vector<T>(n, T(0))};
  params_.push_back(std::move(p));
  by_name_.emplace(std::move(name), params_.size() - 1);
  return params_.size() - 1;
}

template <class T>
std::optional<std::size_t> ParamSet<T>::find(std::string_view name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

template <class T>
std::size_t ParamSet<T>::index(std::string_view name) const {
  auto idx = find(name);
  if (!idx) throw ConfigError("no parameter named " + std::string(name));
  return *idx;
}

template <class T>
std::size_t ParamSet<T>::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <class T>
void ParamSet<T>::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
}

template <class T>
void ParamSet<T>::init_he_uniform(std::uint64_t seed, std::string_view prefix) {
  std::mt19937_64 rng(seed);
  const double gain = 2.0 / (1.0 + kLeakySlope * kLeakySlope);
  for (auto& p : params_) {
    if (!p.name.starts_with(prefix)) continue;
    if (p.name.ends_with("bias")) {
      std::fill(p.value.begin(), p.value.end(), T(0));
      continue;
    }
    const double bound = std::sqrt(3.0 * gain / std::max(1, p.fan_in()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : p.value) v = static_cast<T>(dist(rng));
  }
}

template <class T>
std::string ParamSet<T>::architecture_fingerprint(std::string_view prefix) const {
  Fnv1a h;
  for (const auto& p : params_) {
    if (!p.name.starts_with(prefix)) continue;
    h.update(p.name);
    for (int d : p.shape) h.update_value(d);
  }
  return h.hex();
}

template <class T>
std::string ParamSet<T>::content_fingerprint() const {
  Fnv1a h;
  for (const auto& p : params_) {
    h.update(p.name);
    for (int d : p.shape) h.update_value(d);
    h.update_span(std::span<const T>(p.value));
  }
  return h.hex();
}

template <class T>
double ParamSet<T>::grad_norm() const {
  double ss = 0.0;
  for (const auto& p : params_)
    for (T g : p.grad) ss += static_cast<double>(g) * g;
  return std::sqrt(ss);
}

template <class T>
void ParamSet<T>::scale_grad(T factor) {
  for (auto& p : params_)
    for (T& g : p.grad) g *= factor;
}

template <class T>
bool ParamSet<T>::all_finite() const {
  for (const auto& p : params_)
    for (T v : p.value)
      if (!std::isfinite(v)) return false;
  return true;
}

template struct Param<float>;
template struct Param<double>;
template class ParamSet<float>;
template class ParamSet<double>;

}  // namespace psfuse::nn
