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

#include "psfuse/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "psfuse/core/errors.hpp"

namespace psfuse::netcore {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'P', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

json meta_to_json(const NetMetadata& m) {
  return json{{"variant", variant_name(m.variant)},
              {"widths", m.arch.widths},
              {"regressor_width", m.arch.regressor_width},
              {"intensity_min", m.bins.intensity_min},
              {"intensity_max", m.bins.intensity_max},
              {"image_channels", m.image_channels},
              {"seed", m.seed},
              {"step", m.step},
              {"stage", m.stage}};
}

NetMetadata meta_from_json(const json& j) {
  NetMetadata m;
  m.variant = parse_variant(j.at("variant").get<std::string>());
  m.arch.widths = j.at("widths").get<std::array<int, 7>>();
  m.arch.regressor_width = j.at("regressor_width").get<int>();
  m.bins.intensity_min = j.at("intensity_min").get<double>();
  m.bins.intensity_max = j.at("intensity_max").get<double>();
  m.image_channels = j.at("image_channels").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.step = j.at("step").get<std::uint64_t>();
  m.stage = j.at("stage").get<std::string>();
  return m;
}

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint " + path.string());
  return v;
}

// Pads images/mask of one set to multiples of 4.
struct PaddedSet {
  nn::Tensor<float> images;
  nn::Tensor<float> mask;
  int height = 0;
  int width = 0;
};

PaddedSet pad_set(const ImageLightSet& set) {
  set.validate();
  const std::vector<const ImageLightSet*> sets{&set};
  PaddedSet p;
  p.height = set.height();
  p.width = set.width();
  const int h4 = round_up4(p.height), w4 = round_up4(p.width);
  p.images = nn::pad_to(images_to_tensor<float>(sets), h4, w4);
  p.mask = nn::pad_to(masks_to_tensor<float>(sets), h4, w4);
  return p;
}

void check_lights(const ImageLightSet& set, const std::vector<LightSample>& lights) {
  if (static_cast<int>(lights.size()) != set.size()) {
    throw ShapeError("expected " + std::to_string(set.size()) + " lights, got " + std::to_string(lights.size()));
  }
}

std::vector<lightcodec::LightLogits> split_logits(const nn::Tensor<float>& logits) {
  std::vector<lightcodec::LightLogits> out;
  for (int i = 0; i < logits.n(); ++i) out.push_back(logits_at(logits, i));
  return out;
}

std::vector<LightSample> decode_all(const std::vector<lightcodec::LightLogits>& logits,
                                    const lightcodec::BinConfig& bins) {
  std::vector<LightSample> out;
  for (const auto& l : logits) out.push_back(lightcodec::decode(lightcodec::argmax(l), bins));
  return out;
}

}  // namespace

void NetWeights::validate() const {
  if (!params.all_finite()) throw DomainError("network weights contain non-finite values");
  if (fingerprint() != expected_fingerprint(meta)) {
    throw ConfigError("weight layout does not match the architecture described by the metadata");
  }
}

std::string expected_fingerprint(const NetMetadata& meta) {
  Model<float> model(meta);
  return model.params().architecture_fingerprint();
}

NetWeights init_weights(const NetMetadata& meta) {
  Model<float> model(meta);
  model.params().init_he_uniform(meta.seed);
  NetWeights w;
  w.meta = meta;
  for (const auto& p : model.params()) {
    const auto idx = w.params.add(p.name, p.shape);
    w.params[idx].value = p.value;
  }
  return w;
}

void save_checkpoint(const fs::path& path, const NetWeights& weights) {
  json tensors = json::array();
  for (const auto& p : weights.params) tensors.push_back(json{{"name", p.name}, {"shape", p.shape}});
  const json header{{"format", "psfuse-checkpoint"},
                    {"meta", meta_to_json(weights.meta)},
                    {"fingerprint", weights.fingerprint()},
                    {"tensors", tensors}};
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : weights.params) {
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

NetWeights load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion) throw IoError("unsupported checkpoint version in " + path.string());
  const auto len = read_pod<std::uint64_t>(in, path);
  if (len > (1u << 26)) throw IoError("corrupt checkpoint header in " + path.string());
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw IoError("truncated checkpoint " + path.string());

  NetWeights w;
  json header;
  try {
    header = json::parse(text);
    w.meta = meta_from_json(header.at("meta"));
    for (const auto& t : header.at("tensors")) {
      w.params.add(t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>());
    }
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  for (auto& p : w.params) {
    if (!in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(float)))) {
      throw IoError("truncated checkpoint " + path.string() + " at tensor " + p.name);
    }
  }
  if (header.at("fingerprint").get<std::string>() != w.fingerprint()) {
    throw IoError("checkpoint fingerprint mismatch in " + path.string());
  }
  w.validate();
  return w;
}

// ---------------------------------------------------------------------------

template <class T>
Model<T>::Model(const NetMetadata& meta) : meta_(meta) {
  if (meta.image_channels != 1 && meta.image_channels != 3) throw ConfigError("image channels must be 1 or 3");
  normal_ = std::make_unique<NormalNetwork<T>>(params_, "normal_net.", meta.image_channels, meta.variant, meta.arch);
  lighting_ = std::make_unique<LightingNetwork<T>>(params_, meta.image_channels, meta.arch, meta.bins);
}

template <class T>
void Model<T>::load(const NetWeights& weights) {
  for (auto& p : params_) {
    const auto idx = weights.params.find(p.name);
    if (!idx) throw ConfigError("weights lack parameter " + p.name + " required by this model");
    const auto& src = weights.params[*idx];
    if (src.shape != p.shape) throw ShapeError("parameter " + p.name + " has mismatching shape");
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<T>(src.value[i]);
  }
}

template <class T>
void Model<T>::store(NetWeights& weights) const {
  for (const auto& p : params_) {
    auto& dst = weights.params[weights.params.index(p.name)];
    for (std::size_t i = 0; i < p.value.size(); ++i) dst.value[i] = static_cast<float>(p.value[i]);
  }
}

template class Model<float>;
template class Model<double>;

// ---------------------------------------------------------------------------

Predictor::Predictor(const NetWeights& weights) : model_(std::make_unique<Model<float>>(weights.meta)) {
  model_->load(weights);
}

NormalMap Predictor::normals(const ImageLightSet& set, const std::vector<LightSample>& lights) {
  check_lights(set, lights);
  nn::NoGradGuard no_grad;
  const PaddedSet p = pad_set(set);
  const auto out = model_->normal_net().forward(normal_net_input(p.images, lights), set.size());
  return tensor_to_normal_map(nn::crop_to(out, p.height, p.width), 0, set.mask);
}

LightNetResult Predictor::lights(const ImageLightSet& set) {
  nn::NoGradGuard no_grad;
  const PaddedSet p = pad_set(set);
  const auto out = model_->lighting().forward(p.images, p.mask, set.size(), CascadeDepth::lnet2);
  LightNetResult r;
  r.logits1 = split_logits(out.logits1);
  r.lights1 = out.lights1;
  r.rough_normals = tensor_to_normal_map(nn::crop_to(out.rough_normals, p.height, p.width), 0, set.mask);
  r.logits2 = split_logits(out.logits2);
  r.lights2 = decode_all(r.logits2, model_->meta().bins);
  return r;
}

nn::Tensor<float> Predictor::pooled_features(const ImageLightSet& set, const std::vector<LightSample>& lights) {
  check_lights(set, lights);
  nn::NoGradGuard no_grad;
  const PaddedSet p = pad_set(set);
  const auto f = model_->normal_net().extractor().forward(normal_net_input(p.images, lights), set.size());
  return nn::crop_to(NormalRegressor<float>::pool(f, set.size()), p.height, p.width);
}

FeatureSet extract_features(const ImageLightSet& set, const std::vector<LightSample>& lights,
                            const NetWeights& weights, NetVariant variant) {
  check_lights(set, lights);
  NetMetadata meta = weights.meta;
  meta.variant = variant;
  Model<float> model(meta);
  model.load(weights);
  nn::NoGradGuard no_grad;
  const PaddedSet p = pad_set(set);
  FeatureSet f;
  f.per_image = model.normal_net().extractor().forward(normal_net_input(p.images, lights), set.size());
  f.height = p.height;
  f.width = p.width;
  return f;
}

NormalMap aggregate_and_regress(const FeatureSet& features, const NetWeights& weights, const Mask& mask) {
  if (features.size() == 0) throw ShapeError("empty feature set");
  if (mask.height() != features.height || mask.width() != features.width) {
    throw ShapeError("mask does not match the feature set size");
  }
  Model<float> model(weights.meta);
  model.load(weights);
  nn::NoGradGuard no_grad;
  const auto out = model.normal_net().regressor().forward(features.per_image, features.size());
  return tensor_to_normal_map(nn::crop_to(out, features.height, features.width), 0, mask);
}

NormalMap normal_net_forward(const ImageLightSet& set, const std::vector<LightSample>& lights,
                             const NetWeights& weights, NetVariant variant) {
  check_lights(set, lights);
  NetMetadata meta = weights.meta;
  meta.variant = variant;
  Model<float> model(meta);
  model.load(weights);
  nn::NoGradGuard no_grad;
  const PaddedSet p = pad_set(set);
  const auto out = model.normal_net().forward(normal_net_input(p.images, lights), set.size());
  return tensor_to_normal_map(nn::crop_to(out, p.height, p.width), 0, set.mask);
}

LightNetResult light_net_forward(const ImageLightSet& set, const NetWeights& weights) {
  if (set.size() < 1) throw ShapeError("light_net_forward needs at least one image");
  Predictor predictor(weights);
  return predictor.lights(set);
}

}  // namespace psfuse::netcore
