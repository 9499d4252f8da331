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
#include <filesystem>
#include <vector>

#include "psfuse/core/types.hpp"

namespace psfuse::io {

// Binary containers are little-endian: a 4-byte magic, u32 dimensions, then
// row-major float32 samples.
//   PSNM: magic "PSNM", u32 height, u32 width, float32 (x, y, z) per pixel.
//   PSIM: magic "PSIM", u32 height, u32 width, u32 channels, float32 samples.

void write_normal_map(const std::filesystem::path& path, const NormalMap& normals);
/// The mask is taken from the nonzero pixels of the file.
NormalMap read_normal_map(const std::filesystem::path& path);
/// Pixels outside `mask` must be zero in the file (they are forced to zero).
NormalMap read_normal_map(const std::filesystem::path& path, const Mask& mask);

struct FloatImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> values;
};

void write_float_image(const std::filesystem::path& path, const FloatImage& image);
FloatImage read_float_image(const std::filesystem::path& path);

void write_radiance(const std::filesystem::path& path, const RadianceImage& image);
RadianceImage read_radiance(const std::filesystem::path& path);

/// 8-bit single-channel PNG, 255 inside.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
/// Any PNG; a pixel is inside when its first channel exceeds half range.
Mask read_mask_png(const std::filesystem::path& path);

/// 8-bit PNG with 1 or 3 channels.
void write_png8(const std::filesystem::path& path, int height, int width, int channels,
                const std::vector<std::uint8_t>& data);

struct Png16 {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 or 3 after alpha stripping
  std::vector<std::uint16_t> data;
};

/// Reads 8- or 16-bit PNGs, widening 8-bit samples to 16-bit range.
Png16 read_png16(const std::filesystem::path& path);
void write_png16(const std::filesystem::path& path, const Png16& image);

/// One line per light: "lx ly lz e" with 6 decimal places.
void write_lights(const std::filesystem::path& path, const std::vector<LightSample>& lights);
std::vector<LightSample> read_lights(const std::filesystem::path& path);

/// Whitespace-separated floats, one row per line; blank lines skipped.
std::vector<std::vector<double>> read_table(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace psfuse::io
