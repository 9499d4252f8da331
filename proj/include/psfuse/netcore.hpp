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
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "psfuse/core/types.hpp"
#include "psfuse/lightcodec.hpp"
#include "psfuse/nn/ops.hpp"
#include "psfuse/nn/params.hpp"
#include "psfuse/nn/tensor.hpp"

namespace psfuse::netcore {

using nn::Tensor;

/// Ablation variants of the normal network.
enum class NetVariant {
  full,       // fusion modules with set pooling
  no_pool,    // fusion modules see a zero global grid
  no_fusion,  // fusion modules removed
};

std::string variant_name(NetVariant v);
NetVariant parse_variant(const std::string& name);

/// Channel widths of the seven extractor blocks and the regressor.
struct ArchConfig {
  std::array<int, 7> widths{32, 64, 128, 128, 64, 64, 32};
  int regressor_width = 32;

  bool operator==(const ArchConfig&) const = default;
};

struct FusionModuleSpec {
  nn::PoolKind pool_kind = nn::PoolKind::max;
  int in_channels = 0;
  int out_channels = 0;
};

/// Optional upsample, conv, optional leaky ReLU. Caches what backward needs.
template <class T>
class ConvBlock {
 public:
  ConvBlock(nn::ParamSet<T>& params, const std::string& name, nn::ConvGeometry geometry, bool upsample,
            bool activation);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad = true);
  const nn::ConvGeometry& geometry() const { return geom_; }

 private:
  nn::ParamSet<T>& params_;
  std::size_t weight_;
  std::size_t bias_;
  nn::ConvGeometry geom_;
  bool upsample_;
  bool activation_;
  Tensor<T> input_;
  Tensor<T> output_;
};

/// Pools the set, concatenates the global grid to every member and mixes the
/// result with a 1x1 conv and leaky ReLU.
template <class T>
class FusionModule {
 public:
  FusionModule(nn::ParamSet<T>& params, const std::string& name, FusionModuleSpec spec, bool zero_global);

  Tensor<T> forward(const Tensor<T>& f, int set_size);
  Tensor<T> backward(const Tensor<T>& dy);
  const FusionModuleSpec& spec() const { return spec_; }

 private:
  FusionModuleSpec spec_;
  bool zero_global_;
  ConvBlock<T> mix_;
  int set_size_ = 1;
  std::vector<std::int32_t> argmax_;
};

/// Shared-weight per-image extractor: 7 conv blocks with two stride-2
/// downsamplings and two upsamplings, fusion modules after blocks 2, 4 and 6
/// (mean pooling first, max pooling after). Input height and width must be
/// multiples of 4.
template <class T>
class FeatureExtractor {
 public:
  FeatureExtractor(nn::ParamSet<T>& params, const std::string& prefix, int in_channels, NetVariant variant,
                   const ArchConfig& arch);

  Tensor<T> forward(const Tensor<T>& x, int set_size);
  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad);
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }

 private:
  int in_channels_;
  int out_channels_;
  std::vector<ConvBlock<T>> blocks_;
  std::array<std::unique_ptr<FusionModule<T>>, 3> fusion_;
};

/// Mean pooling over the set, two 3x3 convs to three channels, per-pixel L2
/// normalization.
template <class T>
class NormalRegressor {
 public:
  NormalRegressor(nn::ParamSet<T>& params, const std::string& prefix, int in_channels, const ArchConfig& arch);

  Tensor<T> forward(const Tensor<T>& features, int set_size);
  Tensor<T> backward(const Tensor<T>& dnormals);
  /// The final set pooling alone, without caching.
  static Tensor<T> pool(const Tensor<T>& features, int set_size);

 private:
  ConvBlock<T> hidden_;
  ConvBlock<T> out_;
  int set_size_ = 1;
  Tensor<T> raw_;
  Tensor<T> normals_;
};

/// Extractor plus regressor. Input: [sets * M, C + 3, H, W] (intensity-
/// normalized image, broadcast light direction). Output: [sets, 3, H, W].
template <class T>
class NormalNetwork {
 public:
  NormalNetwork(nn::ParamSet<T>& params, const std::string& prefix, int image_channels, NetVariant variant,
                const ArchConfig& arch);

  Tensor<T> forward(const Tensor<T>& input, int set_size);
  Tensor<T> backward(const Tensor<T>& dnormals, bool need_input_grad);
  FeatureExtractor<T>& extractor() { return extractor_; }
  NormalRegressor<T>& regressor() { return regressor_; }

 private:
  FeatureExtractor<T> extractor_;
  NormalRegressor<T> regressor_;
};

inline constexpr int kLogitWidth = 3 * lightcodec::kClasses;

/// Extractor, spatial average pooling and three linear 32-way heads per image.
/// Output logits: [N, 96, 1, 1] ordered azimuth, elevation, intensity.
template <class T>
class LightEstimator {
 public:
  LightEstimator(nn::ParamSet<T>& params, const std::string& prefix, int in_channels, const ArchConfig& arch);

  Tensor<T> forward(const Tensor<T>& input, int set_size);
  Tensor<T> backward(const Tensor<T>& dlogits, bool need_input_grad);

 private:
  nn::ParamSet<T>& params_;
  FeatureExtractor<T> extractor_;
  std::array<std::size_t, 3> head_weight_;
  std::array<std::size_t, 3> head_bias_;
  Tensor<T> pooled_;
  int feat_h_ = 0;
  int feat_w_ = 0;
};

template <class T>
struct LightingOutputs {
  Tensor<T> logits1;               // [N, 96, 1, 1]
  std::vector<LightSample> lights1;  // decoded initial lights
  Tensor<T> rough_normals;         // [sets, 3, H, W], zero outside the mask
  Tensor<T> shading;               // [N, 1, H, W], rough normal . initial light, masked
  Tensor<T> logits2;               // [N, 96, 1, 1]
};

/// Which stages of the lighting cascade to run.
enum class CascadeDepth { lnet1, nnet, lnet2 };

/// L-Net1 (images + mask), N-Net (normalized images + decoded lights) and
/// L-Net2 (images, lights, rough normals, shading, mask).
template <class T>
class LightingNetwork {
 public:
  LightingNetwork(nn::ParamSet<T>& params, int image_channels, const ArchConfig& arch, lightcodec::BinConfig bins);

  /// images: [sets * M, C, H, W]; mask: [sets, 1, H, W].
  LightingOutputs<T> forward(const Tensor<T>& images, const Tensor<T>& mask, int set_size,
                             CascadeDepth depth = CascadeDepth::lnet2);
  /// Any gradient may be empty. With into_nnet, gradients flow from L-Net2
  /// into N-Net through the rough normals and the shading map; the argmax
  /// light decoding is not differentiated.
  void backward(const Tensor<T>& dlogits1, const Tensor<T>& dnormals, const Tensor<T>& dlogits2,
                bool into_nnet = true);

  LightEstimator<T>& lnet1() { return lnet1_; }
  NormalNetwork<T>& nnet() { return nnet_; }
  LightEstimator<T>& lnet2() { return lnet2_; }

 private:
  int image_channels_;
  lightcodec::BinConfig bins_;
  LightEstimator<T> lnet1_;
  NormalNetwork<T> nnet_;
  LightEstimator<T> lnet2_;
  int set_size_ = 1;
  Tensor<T> mask_;
  std::vector<LightSample> lights1_;
};

// ---------------------------------------------------------------------------
// Tensor assembly.

/// Images of one or more sets as [sum M, C, H, W], multiplied by the mask.
template <class T>
Tensor<T> images_to_tensor(const std::vector<const ImageLightSet*>& sets);
template <class T>
Tensor<T> masks_to_tensor(const std::vector<const ImageLightSet*>& sets);

/// [N, C + 3]: image / intensity, then the direction broadcast over the mask
/// extent (constant over the whole grid).
template <class T>
Tensor<T> normal_net_input(const Tensor<T>& images, const std::vector<LightSample>& lights);
/// [N, C + 1]: image, mask.
template <class T>
Tensor<T> lnet1_input(const Tensor<T>& images, const Tensor<T>& mask, int set_size);
/// [N, C + 8]: image, direction (3), rough normal (3), shading, mask.
template <class T>
Tensor<T> lnet2_input(const Tensor<T>& images, const std::vector<LightSample>& lights, const Tensor<T>& normals,
                      const Tensor<T>& shading, const Tensor<T>& mask, int set_size);
/// [N, 1, H, W]: n . l_m per pixel, zero outside the mask.
template <class T>
Tensor<T> shading_map(const Tensor<T>& normals, const std::vector<LightSample>& lights, const Tensor<T>& mask,
                      int set_size);

template <class T>
lightcodec::LightLogits logits_at(const Tensor<T>& logits, int i);

/// Zero outside the mask; [1, 3, H, W] -> NormalMap.
template <class T>
NormalMap tensor_to_normal_map(const Tensor<T>& normals, int index, const Mask& mask);

inline int round_up4(int v) { return (v + 3) / 4 * 4; }

}  // namespace psfuse::netcore
