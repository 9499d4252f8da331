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

#include "psfuse/nn/adam.hpp"

#include "psfuse/simd/kernels.hpp"

namespace psfuse::nn {

Adam::Adam(ParamSet<float>& params, AdamConfig cfg, std::vector<std::string> prefixes) : params_(params), cfg_(cfg) {
  for (std::size_t i = 0; i < params.count(); ++i) {
    for (const auto& prefix : prefixes) {
      if (params[i].name.starts_with(prefix)) {
        trainable_.push_back(i);
        break;
      }
    }
  }
  for (std::size_t i : trainable_) {
    m_.emplace_back(params[i].size(), 0.0f);
    v_.emplace_back(params[i].size(), 0.0f);
  }
}

void Adam::step() {
  ++step_;
  const simd::AdamStep s{cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps, step_};
  for (std::size_t k = 0; k < trainable_.size(); ++k) {
    auto& p = params_[trainable_[k]];
    simd::adam_update(p.value, p.grad, m_[k], v_[k], s);
  }
}

}  // namespace psfuse::nn
