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
#include <vector>

#include "psfuse/core/types.hpp"

namespace psfuse::classic {

struct SolveOptions {
  /// Drop the darkest ceil(M/4) observations per pixel before solving (M > 4).
  bool shadow_rejection = false;
  /// Pixels with ||g|| below this get no normal.
  double min_g_norm = 1e-6;
};

/// Calibrated Lambertian photometric stereo result. `normals.mask()` holds the
/// recovered pixels; pixels of the input mask that were not recovered are
/// flagged in `unrecovered`.
struct LambertianSolution {
  NormalMap normals;
  int channels = 0;
  std::vector<double> albedo;    // per pixel and channel, >= 0
  std::vector<double> residual;  // per pixel, Frobenius norm of L G - I
  std::vector<std::uint8_t> unrecovered;
};

/// Least-squares solve of I = L g per masked pixel, with L the M x 3 matrix of
/// intensity-scaled light directions. Throws InsufficientObservationsError for
/// M < 3 and DegenerateLightingError when L has rank < 3.
LambertianSolution solve_lambertian(const ImageLightSet& set, const SolveOptions& options = {});

}  // namespace psfuse::classic
