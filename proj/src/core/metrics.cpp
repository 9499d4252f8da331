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

#include "psfuse/core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace psfuse {

namespace {

void check_shapes(const NormalMap& pred, const NormalMap& gt, const Mask& mask) {
  if (pred.height() != gt.height() || pred.width() != gt.width() || mask.height() != gt.height() ||
      mask.width() != gt.width()) {
    throw ShapeError("normal maps and mask must share dimensions");
  }
  if (mask.count() == 0) throw DomainError("mean angular error over an empty mask");
}

}  // namespace

double angular_error(const UnitVec3& a, const UnitVec3& b) {
  // atan2 keeps precision near 0 and 180 degrees, where acos does not.
  const double cx = a.y() * b.z() - a.z() * b.y();
  const double cy = a.z() * b.x() - a.x() * b.z();
  const double cz = a.x() * b.y() - a.y() * b.x();
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), a.dot(b)) * 180.0 / std::numbers::pi;
}

std::vector<double> angular_error_map(const NormalMap& pred, const NormalMap& gt, const Mask& mask) {
  check_shapes(pred, gt, mask);
  std::vector<double> out(static_cast<std::size_t>(mask.height()) * mask.width(), 0.0);
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (mask.inside(p)) out[p] = angular_error(pred.at(p), gt.at(p));
  }
  return out;
}

double mean_angular_error(const NormalMap& pred, const NormalMap& gt, const Mask& mask) {
  check_shapes(pred, gt, mask);
  const std::size_t n = static_cast<std::size_t>(mask.height()) * mask.width();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (!mask.inside(p)) continue;
    sum += angular_error(pred.at(p), gt.at(p));
    ++count;
  }
  return sum / static_cast<double>(count);
}

RadianceImage normalize_by_intensity(const RadianceImage& img, double intensity) {
  if (!(intensity > 0.0) || !std::isfinite(intensity)) {
    throw DomainError("normalization intensity must be positive, got " + std::to_string(intensity));
  }
  RadianceImage out = img;
  for (float& v : out.values()) v = static_cast<float>(v / intensity);
  return out;
}

}  // namespace psfuse
