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

#include "psfuse/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace psfuse {

std::optional<UnitVec3> UnitVec3::try_normalize(double x, double y, double z) {
  const double n = std::sqrt(x * x + y * y + z * z);
  if (!std::isfinite(n) || n == 0.0) return std::nullopt;
  return UnitVec3(x / n, y / n, z / n);
}

UnitVec3 UnitVec3::normalize(double x, double y, double z) {
  auto v = try_normalize(x, y, z);
  if (!v) {
    std::ostringstream os;
    os << "cannot normalize vector (" << x << ", " << y << ", " << z << ")";
    throw DomainError(os.str());
  }
  return *v;
}

RadianceImage::RadianceImage(int height, int width, int channels)
    : RadianceImage(height, width, channels,
                    std::vector<float>(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0) *
                                       std::max(channels, 0))) {}

RadianceImage::RadianceImage(int height, int width, int channels, std::vector<float> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
  if (height < kMinImageSide || width < kMinImageSide) {
    throw ShapeError("radiance image must be at least 8x8, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  if (channels != 1 && channels != 3) {
    throw ShapeError("radiance image must have 1 or 3 channels, got " + std::to_string(channels));
  }
  if (values_.size() != pixel_count() * channels_) {
    throw ShapeError("radiance image buffer size does not match its dimensions");
  }
}

void RadianceImage::validate() const {
  for (float v : values_) {
    if (!(v >= 0.0f) || !std::isfinite(v)) throw DomainError("radiance values must be finite and non-negative");
  }
}

Mask::Mask(int height, int width, std::vector<std::uint8_t> inside)
    : height_(height), width_(width), inside_(std::move(inside)) {
  if (height <= 0 || width <= 0 || inside_.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeError("mask buffer size does not match its dimensions");
  }
  for (auto& v : inside_) v = v ? 1 : 0;
  if (count() == 0) throw DomainError("mask has no inside pixels");
}

Mask Mask::full(int height, int width) {
  return Mask(height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 1));
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(inside_.begin(), inside_.end(), std::uint8_t{1}));
}

NormalMap NormalMap::from_vectors(const Mask& mask, std::span<const float> xyz) {
  const std::size_t n = static_cast<std::size_t>(mask.height()) * mask.width();
  if (xyz.size() != 3 * n) throw ShapeError("normal buffer size does not match mask");
  NormalMap out;
  out.mask_ = mask;
  out.xyz_.assign(3 * n, 0.0f);
  for (std::size_t p = 0; p < n; ++p) {
    if (!mask.inside(p)) continue;
    const UnitVec3 u = UnitVec3::normalize(xyz[3 * p], xyz[3 * p + 1], xyz[3 * p + 2]);
    out.xyz_[3 * p] = static_cast<float>(u.x());
    out.xyz_[3 * p + 1] = static_cast<float>(u.y());
    out.xyz_[3 * p + 2] = static_cast<float>(u.z());
  }
  return out;
}

NormalMap NormalMap::from_unit_vectors(const Mask& mask, std::vector<float> xyz) {
  const std::size_t n = static_cast<std::size_t>(mask.height()) * mask.width();
  if (xyz.size() != 3 * n) throw ShapeError("normal buffer size does not match mask");
  for (std::size_t p = 0; p < n; ++p) {
    if (!mask.inside(p)) {
      xyz[3 * p] = xyz[3 * p + 1] = xyz[3 * p + 2] = 0.0f;
      continue;
    }
    const double x = xyz[3 * p], y = xyz[3 * p + 1], z = xyz[3 * p + 2];
    const double len = std::sqrt(x * x + y * y + z * z);
    if (!(std::abs(len - 1.0) <= 1e-5)) {
      throw DomainError("normal at pixel " + std::to_string(p) + " is not unit length");
    }
  }
  NormalMap out;
  out.mask_ = mask;
  out.xyz_ = std::move(xyz);
  return out;
}

UnitVec3 NormalMap::at(std::size_t pixel) const {
  return UnitVec3::normalize(xyz_[3 * pixel], xyz_[3 * pixel + 1], xyz_[3 * pixel + 2]);
}

LightSample::LightSample(UnitVec3 direction, double intensity) : direction_(direction), intensity_(intensity) {
  if (!(direction.z() > 0.0)) throw DomainError("light direction must face the camera (z > 0)");
  if (!(intensity > 0.0) || !std::isfinite(intensity)) throw DomainError("light intensity must be positive");
}

void ImageLightSet::validate() const {
  if (images.empty()) throw ShapeError("image set is empty");
  const auto& first = images.front();
  for (const auto& img : images) {
    if (img.height() != first.height() || img.width() != first.width() || img.channels() != first.channels()) {
      throw ShapeError("images in a set must share dimensions and channel count");
    }
  }
  if (mask.height() != first.height() || mask.width() != first.width()) {
    throw ShapeError("mask dimensions do not match the images");
  }
  if (lights && lights->size() != images.size()) {
    throw ShapeError("light list length " + std::to_string(lights->size()) + " does not match image count " +
                     std::to_string(images.size()));
  }
  if (gt_normals && (gt_normals->height() != mask.height() || gt_normals->width() != mask.width())) {
    throw ShapeError("ground-truth normal map dimensions do not match the images");
  }
}

}  // namespace psfuse
