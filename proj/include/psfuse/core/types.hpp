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
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psfuse/core/errors.hpp"

namespace psfuse {

/// A direction in R^3 with unit length. Only obtainable through normalize().
class UnitVec3 {
 public:
  /// Throws DomainError for zero or non-finite input.
  static UnitVec3 normalize(double x, double y, double z);
  static std::optional<UnitVec3> try_normalize(double x, double y, double z);

  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }
  double dot(const UnitVec3& o) const { return x_ * o.x_ + y_ * o.y_ + z_ * o.z_; }
  UnitVec3 operator-() const { return UnitVec3(-x_, -y_, -z_); }
  std::array<double, 3> array() const { return {x_, y_, z_}; }

  bool operator==(const UnitVec3&) const = default;

 private:
  UnitVec3(double x, double y, double z) : x_(x), y_(y), z_(z) {}
  double x_;
  double y_;
  double z_;
};

inline constexpr int kMinImageSide = 8;

/// Linear HDR radiance, channels interleaved per pixel, rows top to bottom.
class RadianceImage {
 public:
  RadianceImage() = default;
  RadianceImage(int height, int width, int channels);
  RadianceImage(int height, int width, int channels, std::vector<float> values);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }

  float at(int row, int col, int ch) const { return values_[index(row, col, ch)]; }
  float& at(int row, int col, int ch) { return values_[index(row, col, ch)]; }
  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  /// Throws DomainError if any value is negative or non-finite.
  void validate() const;

 private:
  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> values_;
};

class Mask {
 public:
  Mask() = default;
  /// Throws DomainError when no pixel is set.
  Mask(int height, int width, std::vector<std::uint8_t> inside);
  static Mask full(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  bool inside(int row, int col) const { return inside_[static_cast<std::size_t>(row) * width_ + col] != 0; }
  bool inside(std::size_t pixel) const { return inside_[pixel] != 0; }
  std::size_t count() const;
  std::span<const std::uint8_t> data() const { return inside_; }

  bool operator==(const Mask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> inside_;
};

/// Unit normals inside the mask, exact zero vectors outside.
class NormalMap {
 public:
  NormalMap() = default;
  /// Normalizes every masked vector and zeroes the rest. Throws DomainError if a
  /// masked vector is zero or non-finite.
  static NormalMap from_vectors(const Mask& mask, std::span<const float> xyz);
  /// Like from_vectors but validates instead of normalizing (tolerance 1e-5).
  static NormalMap from_unit_vectors(const Mask& mask, std::vector<float> xyz);

  int height() const { return mask_.height(); }
  int width() const { return mask_.width(); }
  const Mask& mask() const { return mask_; }
  std::span<const float> data() const { return xyz_; }

  std::array<float, 3> raw(std::size_t pixel) const {
    return {xyz_[3 * pixel], xyz_[3 * pixel + 1], xyz_[3 * pixel + 2]};
  }
  std::array<float, 3> raw(int row, int col) const {
    return raw(static_cast<std::size_t>(row) * width() + col);
  }
  /// Only valid for masked pixels.
  UnitVec3 at(std::size_t pixel) const;
  UnitVec3 at(int row, int col) const { return at(static_cast<std::size_t>(row) * width() + col); }

 private:
  Mask mask_;
  std::vector<float> xyz_;
};

/// One directional light: camera-facing direction and a relative intensity.
class LightSample {
 public:
  /// Throws DomainError unless direction.z() > 0 and intensity > 0.
  LightSample(UnitVec3 direction, double intensity);

  const UnitVec3& direction() const { return direction_; }
  double intensity() const { return intensity_; }
  bool operator==(const LightSample&) const = default;

 private:
  UnitVec3 direction_;
  double intensity_;
};

/// Unordered images of one object under one camera.
struct ImageLightSet {
  std::string name;
  std::vector<RadianceImage> images;
  Mask mask;
  std::optional<std::vector<LightSample>> lights;
  std::optional<NormalMap> gt_normals;

  int size() const { return static_cast<int>(images.size()); }
  int height() const { return mask.height(); }
  int width() const { return mask.width(); }
  int channels() const { return images.empty() ? 0 : images.front().channels(); }

  /// Checks the set invariants; throws ShapeError or DomainError.
  void validate() const;
};

}  // namespace psfuse
