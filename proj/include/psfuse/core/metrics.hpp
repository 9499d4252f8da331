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

#include "psfuse/core/types.hpp"

namespace psfuse {

/// Angle between two unit vectors in degrees, in [0, 180].
double angular_error(const UnitVec3& a, const UnitVec3& b);

/// Mean per-pixel angular error over the pixels of `mask`. Values of pixels
/// outside `mask` are never read.
double mean_angular_error(const NormalMap& pred, const NormalMap& gt, const Mask& mask);

/// Per-pixel angular error in degrees, 0 outside the mask.
std::vector<double> angular_error_map(const NormalMap& pred, const NormalMap& gt, const Mask& mask);

RadianceImage normalize_by_intensity(const RadianceImage& img, double intensity);

}  // namespace psfuse
