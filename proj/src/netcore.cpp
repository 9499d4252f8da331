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

#include "psfuse/netcore.hpp"

#include <algorithm>

namespace psfuse::netcore {

using nn::ConvGeometry;
using nn::PoolKind;

std::string variant_name(NetVariant v) {
  switch (v) {
    case NetVariant::full:
      return "full";
    case NetVariant::no_pool:
      return "no_pool";
    case NetVariant::no_fusion:
      return "no_fusion";
  }
  return "full";
}

NetVariant parse_variant(const std::string& name) {
  if (name == "full") return NetVariant::full;
  if (name == "no_pool") return NetVariant::no_pool;
  if (name == "no_fusion") return NetVariant::no_fusion;
  throw ConfigError("unknown network variant '" + name + "' (expected full, no_pool or no_fusion)");
}

// ---------------------------------------------------------------------------

template <class T>
ConvBlock<T>::ConvBlock(nn::ParamSet<T>& params, const std::string& name, ConvGeometry geometry, bool upsample,
                        bool activation)
    : params_(params),
      weight_(params.add(name + ".weight", {geometry.out_channels, geometry.in_channels, geometry.kernel,
                                            geometry.kernel})),
      bias_(params.add(name + ".bias", {geometry.out_channels})),
      geom_(geometry),
      upsample_(upsample),
      activation_(activation) {}

template <class T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x) {
  const bool cache = nn::grad_enabled();
  Tensor<T> y;
  if (upsample_) {
    Tensor<T> up = nn::upsample2x_forward(x);
    y = nn::conv2d_forward(up, geom_, params_[weight_].value.data(), params_[bias_].value.data());
    if (cache) input_ = std::move(up);
  } else {
    y = nn::conv2d_forward(x, geom_, params_[weight_].value.data(), params_[bias_].value.data());
    if (cache) input_ = x;
  }
  if (activation_) {
    nn::leaky_relu_inplace(y);
    if (cache) output_ = y;
  }
  return y;
}

template <class T>
Tensor<T> ConvBlock<T>::backward(const Tensor<T>& dy, bool need_input_grad) {
  Tensor<T> g = dy;
  if (activation_) nn::leaky_relu_backward_inplace(output_, g);
  Tensor<T> dx;
  auto& w = params_[weight_];
  auto& b = params_[bias_];
  nn::conv2d_backward(input_, g, geom_, w.value.data(), w.grad.data(), b.grad.data(),
                      need_input_grad ? &dx : nullptr);
  if (need_input_grad && upsample_) dx = nn::upsample2x_backward(dx);
  return dx;
}

// ---------------------------------------------------------------------------

template <class T>
FusionModule<T>::FusionModule(nn::ParamSet<T>& params, const std::string& name, FusionModuleSpec spec,
                              bool zero_global)
    : spec_(spec),
      zero_global_(zero_global),
      mix_(params, name + ".mix", ConvGeometry{2 * spec.in_channels, spec.out_channels, 1, 1}, false, true) {
  if (spec.out_channels <= 0 || spec.in_channels <= 0) throw ConfigError("fusion module needs positive widths");
}

template <class T>
Tensor<T> FusionModule<T>::forward(const Tensor<T>& f, int set_size) {
  if (f.c() != spec_.in_channels) {
    throw ShapeError("fusion module expects " + std::to_string(spec_.in_channels) + " channels, got " +
                     std::to_string(f.c()));
  }
  if (set_size <= 0 || f.n() % set_size != 0) throw ShapeError("fusion module: batch is not a multiple of set size");
  set_size_ = set_size;
  Tensor<T> g = zero_global_ ? Tensor<T>(f.n() / set_size, f.c(), f.h(), f.w())
                             : nn::set_pool_forward(f, set_size, spec_.pool_kind,
                                                    nn::grad_enabled() ? &argmax_ : nullptr);
  return mix_.forward(nn::concat_with_global(f, g, set_size));
}

template <class T>
Tensor<T> FusionModule<T>::backward(const Tensor<T>& dy) {
  const Tensor<T> dcat = mix_.backward(dy, true);
  Tensor<T> dx;
  Tensor<T> dg;
  nn::split_concat_grad(dcat, spec_.in_channels, set_size_, dx, zero_global_ ? nullptr : &dg);
  if (!zero_global_) nn::set_pool_backward(dg, set_size_, spec_.pool_kind, argmax_, dx);
  return dx;
}

// ---------------------------------------------------------------------------

template <class T>
FeatureExtractor<T>::FeatureExtractor(nn::ParamSet<T>& params, const std::string& prefix, int in_channels,
                                      NetVariant variant, const ArchConfig& arch)
    : in_channels_(in_channels), out_channels_(arch.widths[6]) {
  const auto& w = arch.widths;
  struct BlockShape {
    int in, out, stride;
    bool upsample;
  };
  const std::array<BlockShape, 7> shapes{{{in_channels, w[0], 1, false},
                                          {w[0], w[1], 2, false},
                                          {w[1], w[2], 2, false},
                                          {w[2], w[3], 1, false},
                                          {w[3], w[4], 1, true},
                                          {w[4], w[5], 1, false},
                                          {w[5], w[6], 1, true}}};
  blocks_.reserve(shapes.size());
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    blocks_.emplace_back(params, prefix + "block" + std::to_string(i + 1), ConvGeometry{s.in, s.out, 3, s.stride},
                         s.upsample, true);
  }
  if (variant != NetVariant::no_fusion) {
    const bool zero = variant == NetVariant::no_pool;
    const std::array<int, 3> after{1, 3, 5};
    for (int k = 0; k < 3; ++k) {
      const int ch = w[after[k]];
      const FusionModuleSpec spec{k == 0 ? PoolKind::mean : PoolKind::max, ch, ch};
      fusion_[k] = std::make_unique<FusionModule<T>>(params, prefix + "fusion" + std::to_string(k + 1), spec, zero);
    }
  }
}

template <class T>
Tensor<T> FeatureExtractor<T>::forward(const Tensor<T>& x, int set_size) {
  if (x.h() % 4 != 0 || x.w() % 4 != 0) {
    throw ShapeError("extractor input height and width must be multiples of 4, got " + x.shape_string());
  }
  if (x.c() != in_channels_) {
    throw ShapeError("extractor expects " + std::to_string(in_channels_) + " input channels, got " +
                     std::to_string(x.c()));
  }
  Tensor<T> h = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = blocks_[i].forward(h);
    if (i % 2 == 1 && fusion_[i / 2]) h = fusion_[i / 2]->forward(h, set_size);
  }
  return h;
}

template <class T>
Tensor<T> FeatureExtractor<T>::backward(const Tensor<T>& dy, bool need_input_grad) {
  Tensor<T> g = dy;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    if (i % 2 == 1 && fusion_[i / 2]) g = fusion_[i / 2]->backward(g);
    g = blocks_[i].backward(g, i > 0 || need_input_grad);
  }
  return g;
}

// ---------------------------------------------------------------------------

template <class T>
NormalRegressor<T>::NormalRegressor(nn::ParamSet<T>& params, const std::string& prefix, int in_channels,
                                    const ArchConfig& arch)
    : hidden_(params, prefix + "regressor.conv1", ConvGeometry{in_channels, arch.regressor_width, 3, 1}, false, true),
      out_(params, prefix + "regressor.conv2", ConvGeometry{arch.regressor_width, 3, 3, 1}, false, false) {}

template <class T>
Tensor<T> NormalRegressor<T>::pool(const Tensor<T>& features, int set_size) {
  return nn::set_pool_forward(features, set_size, PoolKind::mean, nullptr);
}

template <class T>
Tensor<T> NormalRegressor<T>::forward(const Tensor<T>& features, int set_size) {
  set_size_ = set_size;
  Tensor<T> raw = out_.forward(hidden_.forward(pool(features, set_size)));
  Tensor<T> normals = nn::l2_normalize_forward(raw);
  if (nn::grad_enabled()) {
    raw_ = std::move(raw);
    normals_ = normals;
  }
  return normals;
}

template <class T>
Tensor<T> NormalRegressor<T>::backward(const Tensor<T>& dnormals) {
  const Tensor<T> draw = nn::l2_normalize_backward(raw_, normals_, dnormals);
  const Tensor<T> dpooled = hidden_.backward(out_.backward(draw, true), true);
  Tensor<T> dfeat(dpooled.n() * set_size_, dpooled.c(), dpooled.h(), dpooled.w());
  nn::set_pool_backward(dpooled, set_size_, PoolKind::mean, {}, dfeat);
  return dfeat;
}

// ---------------------------------------------------------------------------

template <class T>
NormalNetwork<T>::NormalNetwork(nn::ParamSet<T>& params, const std::string& prefix, int image_channels,
                                NetVariant variant, const ArchConfig& arch)
    : extractor_(params, prefix, image_channels + 3, variant, arch),
      regressor_(params, prefix, arch.widths[6], arch) {}

template <class T>
Tensor<T> NormalNetwork<T>::forward(const Tensor<T>& input, int set_size) {
  return regressor_.forward(extractor_.forward(input, set_size), set_size);
}

template <class T>
Tensor<T> NormalNetwork<T>::backward(const Tensor<T>& dnormals, bool need_input_grad) {
  return extractor_.backward(regressor_.backward(dnormals), need_input_grad);
}

// ---------------------------------------------------------------------------

template <class T>
LightEstimator<T>::LightEstimator(nn::ParamSet<T>& params, const std::string& prefix, int in_channels,
                                  const ArchConfig& arch)
    : params_(params), extractor_(params, prefix, in_channels, NetVariant::full, arch) {
  const std::array<const char*, 3> heads{"azimuth", "elevation", "intensity"};
  for (int k = 0; k < 3; ++k) {
    const std::string base = prefix + "head." + heads[k];
    head_weight_[k] = params.add(base + ".weight", {lightcodec::kClasses, extractor_.out_channels()});
    head_bias_[k] = params.add(base + ".bias", {lightcodec::kClasses});
  }
}

template <class T>
Tensor<T> LightEstimator<T>::forward(const Tensor<T>& input, int set_size) {
  const Tensor<T> f = extractor_.forward(input, set_size);
  feat_h_ = f.h();
  feat_w_ = f.w();
  Tensor<T> pooled = nn::global_avg_pool_forward(f);
  Tensor<T> logits(input.n(), kLogitWidth, 1, 1);
  for (int k = 0; k < 3; ++k) {
    const Tensor<T> y = nn::linear_forward(pooled, lightcodec::kClasses, params_[head_weight_[k]].value.data(),
                                           params_[head_bias_[k]].value.data());
    for (int i = 0; i < input.n(); ++i) {
      std::copy(y.sample(i), y.sample(i) + lightcodec::kClasses, logits.sample(i) + k * lightcodec::kClasses);
    }
  }
  if (nn::grad_enabled()) pooled_ = std::move(pooled);
  return logits;
}

template <class T>
Tensor<T> LightEstimator<T>::backward(const Tensor<T>& dlogits, bool need_input_grad) {
  const int n = dlogits.n();
  Tensor<T> dpooled(pooled_.n(), pooled_.c(), 1, 1);
  for (int k = 0; k < 3; ++k) {
    Tensor<T> dy(n, lightcodec::kClasses, 1, 1);
    for (int i = 0; i < n; ++i) {
      const T* src = dlogits.sample(i) + k * lightcodec::kClasses;
      std::copy(src, src + lightcodec::kClasses, dy.sample(i));
    }
    auto& w = params_[head_weight_[k]];
    auto& b = params_[head_bias_[k]];
    const Tensor<T> dx = nn::linear_backward(pooled_, dy, w.value.data(), w.grad.data(), b.grad.data());
    for (std::size_t e = 0; e < dx.size(); ++e) dpooled.data()[e] += dx.data()[e];
  }
  return extractor_.backward(nn::global_avg_pool_backward(dpooled, feat_h_, feat_w_), need_input_grad);
}

// ---------------------------------------------------------------------------

template <class T>
LightingNetwork<T>::LightingNetwork(nn::ParamSet<T>& params, int image_channels, const ArchConfig& arch,
                                    lightcodec::BinConfig bins)
    : image_channels_(image_channels),
      bins_(bins),
      lnet1_(params, "lnet1.", image_channels + 1, arch),
      nnet_(params, "nnet.", image_channels, NetVariant::full, arch),
      lnet2_(params, "lnet2.", image_channels + 8, arch) {}

template <class T>
LightingOutputs<T> LightingNetwork<T>::forward(const Tensor<T>& images, const Tensor<T>& mask, int set_size,
                                               CascadeDepth depth) {
  if (images.c() != image_channels_) throw ShapeError("lighting network: unexpected image channel count");
  set_size_ = set_size;
  mask_ = mask;
  LightingOutputs<T> out;
  out.logits1 = lnet1_.forward(lnet1_input(images, mask, set_size), set_size);
  out.lights1.clear();
  for (int i = 0; i < images.n(); ++i) {
    out.lights1.push_back(lightcodec::decode(lightcodec::argmax(logits_at(out.logits1, i)), bins_));
  }
  lights1_ = out.lights1;
  if (depth == CascadeDepth::lnet1) return out;

  out.rough_normals = nnet_.forward(normal_net_input(images, out.lights1), set_size);
  for (int s = 0; s < out.rough_normals.n(); ++s)
    for (int c = 0; c < 3; ++c) {
      T* dst = out.rough_normals.plane(s, c);
      const T* m = mask.plane(s, 0);
      for (std::size_t p = 0; p < out.rough_normals.plane_size(); ++p) dst[p] *= m[p];
    }
  if (depth == CascadeDepth::nnet) return out;

  out.shading = shading_map(out.rough_normals, out.lights1, mask, set_size);
  out.logits2 = lnet2_.forward(lnet2_input(images, out.lights1, out.rough_normals, out.shading, mask, set_size),
                               set_size);
  return out;
}

template <class T>
void LightingNetwork<T>::backward(const Tensor<T>& dlogits1, const Tensor<T>& dnormals, const Tensor<T>& dlogits2,
                                  bool into_nnet) {
  if (!dlogits1.empty()) lnet1_.backward(dlogits1, false);
  const int sets = mask_.n();
  const int h = mask_.h(), w = mask_.w();
  Tensor<T> dn = dnormals.empty() ? Tensor<T>(sets, 3, h, w) : dnormals;
  bool flows = !dnormals.empty();
  if (!dlogits2.empty() && !into_nnet) {
    lnet2_.backward(dlogits2, false);
  } else if (!dlogits2.empty()) {
    const Tensor<T> din = lnet2_.backward(dlogits2, true);
    const int c0 = image_channels_;
    for (int i = 0; i < din.n(); ++i) {
      const int s = i / set_size_;
      const auto& l = lights1_[i].direction();
      const std::array<double, 3> ld{l.x(), l.y(), l.z()};
      const T* dshade = din.plane(i, c0 + 6);
      for (int c = 0; c < 3; ++c) {
        const T* dnorm_in = din.plane(i, c0 + 3 + c);
        T* dst = dn.plane(s, c);
        const T lc = static_cast<T>(ld[c]);
        for (std::size_t p = 0; p < dn.plane_size(); ++p) dst[p] += dnorm_in[p] + dshade[p] * lc;
      }
    }
    flows = true;
  }
  if (!flows) return;
  for (int s = 0; s < sets; ++s)
    for (int c = 0; c < 3; ++c) {
      T* dst = dn.plane(s, c);
      const T* m = mask_.plane(s, 0);
      for (std::size_t p = 0; p < dn.plane_size(); ++p) dst[p] *= m[p];
    }
  nnet_.backward(dn, false);
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> images_to_tensor(const std::vector<const ImageLightSet*>& sets) {
  if (sets.empty()) throw ShapeError("no image sets");
  const auto& first = *sets.front();
  int total = 0;
  for (const auto* s : sets) {
    s->validate();
    if (s->height() != first.height() || s->width() != first.width() || s->channels() != first.channels()) {
      throw ShapeError("image sets in one batch must share dimensions");
    }
    total += s->size();
  }
  const int c = first.channels(), h = first.height(), w = first.width();
  Tensor<T> out(total, c, h, w);
  int n = 0;
  for (const auto* s : sets) {
    for (const auto& img : s->images) {
      const auto v = img.values();
      for (int ch = 0; ch < c; ++ch) {
        T* dst = out.plane(n, ch);
        for (std::size_t p = 0; p < out.plane_size(); ++p) {
          dst[p] = s->mask.inside(p) ? static_cast<T>(v[p * c + ch]) : T(0);
        }
      }
      ++n;
    }
  }
  return out;
}

template <class T>
Tensor<T> masks_to_tensor(const std::vector<const ImageLightSet*>& sets) {
  const auto& first = *sets.front();
  Tensor<T> out(static_cast<int>(sets.size()), 1, first.height(), first.width());
  for (std::size_t s = 0; s < sets.size(); ++s) {
    T* dst = out.plane(static_cast<int>(s), 0);
    for (std::size_t p = 0; p < out.plane_size(); ++p) dst[p] = sets[s]->mask.inside(p) ? T(1) : T(0);
  }
  return out;
}

template <class T>
Tensor<T> normal_net_input(const Tensor<T>& images, const std::vector<LightSample>& lights) {
  if (static_cast<int>(lights.size()) != images.n()) {
    throw ShapeError("light list length " + std::to_string(lights.size()) + " does not match image count " +
                     std::to_string(images.n()));
  }
  const int c = images.c();
  Tensor<T> out(images.n(), c + 3, images.h(), images.w());
  for (int i = 0; i < images.n(); ++i) {
    const T inv = static_cast<T>(1.0 / lights[i].intensity());
    for (int ch = 0; ch < c; ++ch) {
      const T* src = images.plane(i, ch);
      T* dst = out.plane(i, ch);
      for (std::size_t p = 0; p < out.plane_size(); ++p) dst[p] = src[p] * inv;
    }
    const auto& d = lights[i].direction();
    const std::array<T, 3> dir{static_cast<T>(d.x()), static_cast<T>(d.y()), static_cast<T>(d.z())};
    for (int k = 0; k < 3; ++k) std::fill(out.plane(i, c + k), out.plane(i, c + k) + out.plane_size(), dir[k]);
  }
  return out;
}

template <class T>
Tensor<T> lnet1_input(const Tensor<T>& images, const Tensor<T>& mask, int set_size) {
  if (mask.n() * set_size != images.n()) throw ShapeError("mask count does not match the image sets");
  Tensor<T> out(images.n(), images.c() + 1, images.h(), images.w());
  for (int i = 0; i < images.n(); ++i) {
    std::copy(images.sample(i), images.sample(i) + images.sample_size(), out.sample(i));
    std::copy(mask.plane(i / set_size, 0), mask.plane(i / set_size, 0) + mask.plane_size(),
              out.plane(i, images.c()));
  }
  return out;
}

template <class T>
Tensor<T> lnet2_input(const Tensor<T>& images, const std::vector<LightSample>& lights, const Tensor<T>& normals,
                      const Tensor<T>& shading, const Tensor<T>& mask, int set_size) {
  if (static_cast<int>(lights.size()) != images.n() || shading.n() != images.n() ||
      normals.n() * set_size != images.n() || mask.n() != normals.n()) {
    throw ShapeError("lighting stage-2 inputs disagree in count");
  }
  const int c = images.c();
  Tensor<T> out(images.n(), c + 8, images.h(), images.w());
  const std::size_t hw = out.plane_size();
  for (int i = 0; i < images.n(); ++i) {
    const int s = i / set_size;
    std::copy(images.sample(i), images.sample(i) + images.sample_size(), out.sample(i));
    const auto& d = lights[i].direction();
    const std::array<T, 3> dir{static_cast<T>(d.x()), static_cast<T>(d.y()), static_cast<T>(d.z())};
    for (int k = 0; k < 3; ++k) std::fill(out.plane(i, c + k), out.plane(i, c + k) + hw, dir[k]);
    for (int k = 0; k < 3; ++k) std::copy(normals.plane(s, k), normals.plane(s, k) + hw, out.plane(i, c + 3 + k));
    std::copy(shading.plane(i, 0), shading.plane(i, 0) + hw, out.plane(i, c + 6));
    std::copy(mask.plane(s, 0), mask.plane(s, 0) + hw, out.plane(i, c + 7));
  }
  return out;
}

template <class T>
Tensor<T> shading_map(const Tensor<T>& normals, const std::vector<LightSample>& lights, const Tensor<T>& mask,
                      int set_size) {
  const int n = normals.n() * set_size;
  if (static_cast<int>(lights.size()) != n) throw ShapeError("shading map: light count mismatch");
  Tensor<T> out(n, 1, normals.h(), normals.w());
  for (int i = 0; i < n; ++i) {
    const int s = i / set_size;
    const auto& d = lights[i].direction();
    const T lx = static_cast<T>(d.x()), ly = static_cast<T>(d.y()), lz = static_cast<T>(d.z());
    const T* m = mask.plane(s, 0);
    const T *nx = normals.plane(s, 0), *ny = normals.plane(s, 1), *nz = normals.plane(s, 2);
    T* dst = out.plane(i, 0);
    for (std::size_t p = 0; p < out.plane_size(); ++p) dst[p] = m[p] * (nx[p] * lx + ny[p] * ly + nz[p] * lz);
  }
  return out;
}

template <class T>
lightcodec::LightLogits logits_at(const Tensor<T>& logits, int i) {
  lightcodec::LightLogits out;
  const T* src = logits.sample(i);
  for (int k = 0; k < lightcodec::kClasses; ++k) {
    out.azimuth[k] = static_cast<double>(src[k]);
    out.elevation[k] = static_cast<double>(src[lightcodec::kClasses + k]);
    out.intensity[k] = static_cast<double>(src[2 * lightcodec::kClasses + k]);
  }
  return out;
}

template <class T>
NormalMap tensor_to_normal_map(const Tensor<T>& normals, int index, const Mask& mask) {
  if (normals.c() != 3 || normals.h() < mask.height() || normals.w() < mask.width()) {
    throw ShapeError("normal tensor does not cover the mask");
  }
  std::vector<float> xyz(static_cast<std::size_t>(mask.height()) * mask.width() * 3, 0.0f);
  for (int r = 0; r < mask.height(); ++r)
    for (int col = 0; col < mask.width(); ++col) {
      const std::size_t p = static_cast<std::size_t>(r) * mask.width() + col;
      if (!mask.inside(p)) continue;
      for (int c = 0; c < 3; ++c) xyz[3 * p + c] = static_cast<float>(normals.at(index, c, r, col));
    }
  return NormalMap::from_vectors(mask, xyz);
}

#define PSFUSE_INSTANTIATE_NET(T)                                                                                \
  template class ConvBlock<T>;                                                                                  \
  template class FusionModule<T>;                                                                               \
  template class FeatureExtractor<T>;                                                                           \
  template class NormalRegressor<T>;                                                                            \
  template class NormalNetwork<T>;                                                                              \
  template class LightEstimator<T>;                                                                             \
  template class LightingNetwork<T>;                                                                            \
  template Tensor<T> images_to_tensor(const std::vector<const ImageLightSet*>&);                                \
  template Tensor<T> masks_to_tensor(const std::vector<const ImageLightSet*>&);                                 \
  template Tensor<T> normal_net_input(const Tensor<T>&, const std::vector<LightSample>&);                        \
  template Tensor<T> lnet1_input(const Tensor<T>&, const Tensor<T>&, int);                                      \
  template Tensor<T> lnet2_input(const Tensor<T>&, const std::vector<LightSample>&, const Tensor<T>&,           \
                                 const Tensor<T>&, const Tensor<T>&, int);                                      \
  template Tensor<T> shading_map(const Tensor<T>&, const std::vector<LightSample>&, const Tensor<T>&, int);     \
  template lightcodec::LightLogits logits_at(const Tensor<T>&, int);                                            \
  template NormalMap tensor_to_normal_map(const Tensor<T>&, int, const Mask&);

PSFUSE_INSTANTIATE_NET(float)
PSFUSE_INSTANTIATE_NET(double)

#undef PSFUSE_INSTANTIATE_NET

}  // namespace psfuse::netcore
