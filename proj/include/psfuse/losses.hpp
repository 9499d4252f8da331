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

#include <array>
#include <map>
#include <string>
#include <vector>

#include "psfuse/core/types.hpp"
#include "psfuse/lightcodec.hpp"
#include "psfuse/nn/tensor.hpp"

namespace psfuse::losses {

using nn::Tensor;

struct LossReport {
  double total = 0.0;
  std::map<std::string, double> components;  // light1, light2, normal, shading
  int batch_images = 0;                      // M (summed over the batch)
  long pixels = 0;                           // P (summed over the batch)

  std::string to_json() const;
  static LossReport from_json(const std::string& text);
};

// ---------------------------------------------------------------------------
// Reference forms over core types.

/// Mean over images of the summed azimuth, elevation and intensity
/// cross-entropies. grad (optional) receives d loss / d logits.
double lighting_loss(const std::vector<lightcodec::LightLogits>& logits,
                     const std::vector<lightcodec::DiscreteLighting>& targets,
                     std::vector<lightcodec::LightLogits>* grad = nullptr);

/// Mean of 1 - n . n_pred over masked pixels.
double normal_loss(const NormalMap& pred, const NormalMap& gt, const Mask& mask);

/// Mean over lights and masked pixels of (n . l - n_pred . l_pred)^2, using
/// light directions.
double shading_loss(const NormalMap& gt_n, const std::vector<LightSample>& gt_l, const NormalMap& pred_n,
                     const std::vector<LightSample>& pred_l, const Mask& mask);

/// Unit-weight sum of the four terms.
LossReport finetune_loss(double light1, double light2, double normal, double shading);

// ---------------------------------------------------------------------------
// Batched forms used in training, with gradients.

/// logits: [N, 96, 1, 1]; targets: N. Mean over the N images.
template <class T>
double lighting_loss(const Tensor<T>& logits, const std::vector<lightcodec::DiscreteLighting>& targets,
                     Tensor<T>* dlogits);

/// pred, gt: [S, 3, H, W]; mask: [S, 1, H, W]. Per-set mean of 1 - gt . pred
/// over masked pixels, averaged over sets. pred is not renormalized.
template <class T>
double normal_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask, Tensor<T>* dpred);

/// gt_n, pred_n: [S, 3, H, W]; lights: S * set_size direction vectors.
/// Per-set mean over lights and masked pixels, averaged over sets. Gradients
/// are optional.
template <class T>
double shading_loss(const Tensor<T>& gt_n, const std::vector<std::array<double, 3>>& gt_l, const Tensor<T>& pred_n,
                    const std::vector<std::array<double, 3>>& pred_l, const Tensor<T>& mask, int set_size,
                    Tensor<T>* dpred_n, std::vector<std::array<double, 3>>* dpred_l = nullptr);

std::vector<std::array<double, 3>> directions(const std::vector<LightSample>& lights);

}  // namespace psfuse::losses
