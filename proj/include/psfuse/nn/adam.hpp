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

#include <string>
#include <vector>

#include "psfuse/nn/params.hpp"

namespace psfuse::nn {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adam over the parameters whose names start with one of `prefixes`; other
/// parameters in the set stay frozen.
class Adam {
 public:
  Adam(ParamSet<float>& params, AdamConfig cfg, std::vector<std::string> prefixes);

  void step();
  float lr() const { return cfg_.lr; }
  void set_lr(float lr) { cfg_.lr = lr; }
  long steps() const { return step_; }
  const std::vector<std::size_t>& trainable() const { return trainable_; }

 private:
  ParamSet<float>& params_;
  AdamConfig cfg_;
  std::vector<std::size_t> trainable_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  long step_ = 0;
};

}  // namespace psfuse::nn
