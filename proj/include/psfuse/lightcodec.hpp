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

#include "psfuse/core/types.hpp"

namespace psfuse::lightcodec {

inline constexpr int kClasses = 32;

/// Azimuth covers [0, 360) degrees and elevation [0, 90] degrees in equal bins;
/// intensity uses equal bins of log-intensity over [intensity_min, intensity_max].
struct BinConfig {
  double intensity_min = 0.2;
  double intensity_max = 2.0;

  bool operator==(const BinConfig&) const = default;
};

struct DiscreteLighting {
  int azimuth_bin = 0;
  int elevation_bin = 0;
  int intensity_bin = 0;

  bool operator==(const DiscreteLighting&) const = default;
};

/// Unnormalized class scores of the three classification heads.
struct LightLogits {
  std::array<double, kClasses> azimuth{};
  std::array<double, kClasses> elevation{};
  std::array<double, kClasses> intensity{};
};

enum class EncodeMode {
  training,   // intensity outside the range is a DomainError
  inference,  // intensity is clamped into the range and reported
};

struct EncodeResult {
  DiscreteLighting bins;
  bool intensity_clamped = false;
};

EncodeResult encode(const LightSample& light, const BinConfig& cfg, EncodeMode mode);
/// Training-mode encode.
DiscreteLighting encode(const LightSample& light, const BinConfig& cfg = {});

/// Bin-center light. Throws DomainError for out-of-range indices.
LightSample decode(const DiscreteLighting& d, const BinConfig& cfg = {});

/// Argmax of each head; the first maximum wins.
DiscreteLighting argmax(const LightLogits& logits);

double azimuth_degrees(const UnitVec3& dir);
double elevation_degrees(const UnitVec3& dir);

}  // namespace psfuse::lightcodec
