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
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "psfuse/core/types.hpp"

namespace psfuse::synthgen {

/// A camera-facing heightfield with its gradient normals.
struct SurfacePatch {
  int resolution = 0;
  std::vector<double> heightfield;  // row-major, units of pixels
  NormalMap normals;
  Mask mask;
};

enum class BrdfKind { lambertian, blinn_phong };

struct BrdfSpec {
  BrdfKind kind = BrdfKind::lambertian;
  std::array<double, 3> albedo{0.5, 0.5, 0.5};
  double specular_strength = 0.0;
  double shininess = 1.0;

  /// Throws DomainError on nonpositive albedo, negative specular strength or
  /// shininess below 1.
  void validate() const;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct GenConfig {
  std::uint64_t seed = 0;
  int num_surfaces = 512;
  int lights_per_surface = 16;
  int resolution = 32;
  Range albedo_range{0.02, 1.0};  // sampled log-uniformly
  Range specular_range{0.0, 0.6};
  Range shininess_range{5.0, 100.0};  // sampled log-uniformly
  Range intensity_range{0.2, 2.0};
  Range elevation_range{20.0, 90.0};  // degrees
  double lambertian_fraction = 0.3;
  double noise_sigma = 0.0;
  bool export_png16 = false;
  double png16_scale = 0.25;  // radiance mapped to 16-bit as min(1, v * scale)

  /// Throws ConfigError on empty ranges, resolution < 16 or fewer than 2 lights.
  void validate() const;
  std::string hash() const;
};

/// Heights and normals from a row-major heightfield. x runs along columns,
/// y points up (against the row index) and z toward the camera; normals come
/// from central differences (one-sided at the border).
SurfacePatch surface_from_heightfield(std::vector<double> heights, int resolution, const Mask& mask);
std::vector<float> heightfield_normals(const std::vector<double>& heights, int resolution);

/// Sum of 3 to 8 Gaussian bumps; deterministic in `seed`.
SurfacePatch make_blob_surface(std::uint64_t seed, int resolution);

using Rng = std::mt19937_64;

LightSample sample_light(Rng& rng, Range elevation_deg, Range intensity);

/// Orthographic render of one directional light. `view` must be (0, 0, 1).
RadianceImage render(const SurfacePatch& surface, const BrdfSpec& brdf, const LightSample& light,
                     const UnitVec3& view);

struct SampleRecord {
  std::string id;
  std::uint64_t seed = 0;
  BrdfSpec brdf;
};

/// The i-th sample of a dataset, generated in memory.
struct GeneratedSample {
  SampleRecord record;
  SurfacePatch surface;
  ImageLightSet set;
};

GeneratedSample generate_sample(const GenConfig& cfg, int index);

struct DatasetManifest {
  std::filesystem::path root;
  std::string config_hash;
  std::vector<SampleRecord> samples;
};

/// Writes the canonical layout:
///   <root>/<id>/img_###.psim, lights.txt, mask.png, normal_gt.psnm,
///   height.psim, meta.json   and   <root>/manifest.json
DatasetManifest generate_dataset(const GenConfig& cfg, const std::filesystem::path& out_dir, int workers = 1);

std::string brdf_kind_name(BrdfKind kind);

}  // namespace psfuse::synthgen
