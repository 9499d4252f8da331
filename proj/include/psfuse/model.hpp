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
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "psfuse/core/types.hpp"
#include "psfuse/lightcodec.hpp"
#include "psfuse/netcore.hpp"
#include "psfuse/nn/params.hpp"

namespace psfuse::netcore {

/// Everything needed to rebuild the parameter layout of a checkpoint.
struct NetMetadata {
  NetVariant variant = NetVariant::full;
  ArchConfig arch;
  lightcodec::BinConfig bins;
  int image_channels = 3;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string stage = "init";
};

/// Parameters of the normal network and the three lighting sub-networks.
struct NetWeights {
  NetMetadata meta;
  nn::ParamSet<float> params;

  std::string fingerprint() const { return params.architecture_fingerprint(); }
  std::string content_hash() const { return params.content_fingerprint(); }
  /// Throws if any value is non-finite or the layout does not match meta.
  void validate() const;
};

/// Architecture fingerprint of the layout described by meta.
std::string expected_fingerprint(const NetMetadata& meta);

/// Fan-in scaled uniform initialization seeded by meta.seed.
NetWeights init_weights(const NetMetadata& meta);

/// Named-tensor archive: "PSCK", u32 version, u64 header length, JSON header
/// (metadata, fingerprint, tensor names and shapes), then float32 payloads in
/// header order. Written through a temporary file and renamed.
void save_checkpoint(const std::filesystem::path& path, const NetWeights& weights);
NetWeights load_checkpoint(const std::filesystem::path& path);

/// Live networks over one parameter set. Not copyable or movable: the
/// networks hold references into params().
template <class T>
class Model {
 public:
  explicit Model(const NetMetadata& meta);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Copies every parameter of this model from weights; missing names throw.
  void load(const NetWeights& weights);
  /// Writes values back into weights (names must exist there).
  void store(NetWeights& weights) const;

  const NetMetadata& meta() const { return meta_; }
  nn::ParamSet<T>& params() { return params_; }
  const nn::ParamSet<T>& params() const { return params_; }
  NormalNetwork<T>& normal_net() { return *normal_; }
  LightingNetwork<T>& lighting() { return *lighting_; }

 private:
  NetMetadata meta_;
  nn::ParamSet<T> params_;
  std::unique_ptr<NormalNetwork<T>> normal_;
  std::unique_ptr<LightingNetwork<T>> lighting_;
};

// ---------------------------------------------------------------------------
// Set-level operations. Inputs of any size are zero-padded to multiples of 4
// and outputs cropped back.

/// Per-image features of one set: [M, C, H', W'] plus the unpadded size.
struct FeatureSet {
  nn::Tensor<float> per_image;
  int height = 0;
  int width = 0;

  int size() const { return per_image.n(); }
};

FeatureSet extract_features(const ImageLightSet& set, const std::vector<LightSample>& lights,
                            const NetWeights& weights, NetVariant variant);

NormalMap aggregate_and_regress(const FeatureSet& features, const NetWeights& weights, const Mask& mask);

NormalMap normal_net_forward(const ImageLightSet& set, const std::vector<LightSample>& lights,
                             const NetWeights& weights, NetVariant variant);

struct LightNetResult {
  std::vector<lightcodec::LightLogits> logits1;
  std::vector<LightSample> lights1;
  NormalMap rough_normals;
  std::vector<lightcodec::LightLogits> logits2;
  std::vector<LightSample> lights2;
};

LightNetResult light_net_forward(const ImageLightSet& set, const NetWeights& weights);

/// Inference helper that keeps one instantiated model around.
class Predictor {
 public:
  explicit Predictor(const NetWeights& weights);

  NormalMap normals(const ImageLightSet& set, const std::vector<LightSample>& lights);
  LightNetResult lights(const ImageLightSet& set);
  /// Features after the final set pooling, [C, H, W] cropped to the set size.
  nn::Tensor<float> pooled_features(const ImageLightSet& set, const std::vector<LightSample>& lights);

 private:
  std::unique_ptr<Model<float>> model_;
};

}  // namespace psfuse::netcore
