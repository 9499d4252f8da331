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

#include "psfuse/lightcodec.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace psfuse::lightcodec {

namespace {

constexpr double kAzimuthWidth = 360.0 / kClasses;
constexpr double kElevationWidth = 90.0 / kClasses;
constexpr double kDeg = std::numbers::pi / 180.0;

int bin_of(double fraction) { return std::clamp(static_cast<int>(std::floor(fraction * kClasses)), 0, kClasses - 1); }

void check_index(int v, const char* what) {
  if (v < 0 || v >= kClasses) throw DomainError(std::string(what) + " bin out of range: " + std::to_string(v));
}

int argmax_of(const std::array<double, kClasses>& scores) {
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

}  // namespace

double azimuth_degrees(const UnitVec3& dir) {
  if (std::hypot(dir.x(), dir.y()) == 0.0) return 0.0;
  double az = std::atan2(dir.y(), dir.x()) / kDeg;
  if (az < 0.0) az += 360.0;
  return az >= 360.0 ? 0.0 : az;
}

double elevation_degrees(const UnitVec3& dir) { return std::atan2(dir.z(), std::hypot(dir.x(), dir.y())) / kDeg; }

EncodeResult encode(const LightSample& light, const BinConfig& cfg, EncodeMode mode) {
  EncodeResult r;
  const UnitVec3& d = light.direction();
  if (std::hypot(d.x(), d.y()) == 0.0) {
    r.bins.azimuth_bin = 0;
  } else {
    r.bins.azimuth_bin = static_cast<int>(std::floor(azimuth_degrees(d) / kAzimuthWidth)) % kClasses;
  }
  r.bins.elevation_bin = bin_of(elevation_degrees(d) / 90.0);

  double e = light.intensity();
  if (e < cfg.intensity_min || e > cfg.intensity_max) {
    if (mode == EncodeMode::training) {
      throw DomainError("light intensity " + std::to_string(e) + " outside the encodable range [" +
                        std::to_string(cfg.intensity_min) + ", " + std::to_string(cfg.intensity_max) + "]");
    }
    e = std::clamp(e, cfg.intensity_min, cfg.intensity_max);
    r.intensity_clamped = true;
  }
  const double lo = std::log(cfg.intensity_min);
  const double hi = std::log(cfg.intensity_max);
  r.bins.intensity_bin = bin_of((std::log(e) - lo) / (hi - lo));
  return r;
}

DiscreteLighting encode(const LightSample& light, const BinConfig& cfg) {
  return encode(light, cfg, EncodeMode::training).bins;
}

LightSample decode(const DiscreteLighting& d, const BinConfig& cfg) {
  check_index(d.azimuth_bin, "azimuth");
  check_index(d.elevation_bin, "elevation");
  check_index(d.intensity_bin, "intensity");
  const double az = (d.azimuth_bin + 0.5) * kAzimuthWidth * kDeg;
  const double el = (d.elevation_bin + 0.5) * kElevationWidth * kDeg;
  const double lo = std::log(cfg.intensity_min);
  const double hi = std::log(cfg.intensity_max);
  const double e = std::exp(lo + (d.intensity_bin + 0.5) / kClasses * (hi - lo));
  return LightSample(UnitVec3::normalize(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)), e);
}

DiscreteLighting argmax(const LightLogits& logits) {
  return {argmax_of(logits.azimuth), argmax_of(logits.elevation), argmax_of(logits.intensity)};
}

}  // namespace psfuse::lightcodec
