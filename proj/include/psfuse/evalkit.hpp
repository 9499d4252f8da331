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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "psfuse/core/types.hpp"
#include "psfuse/model.hpp"

namespace psfuse::evalkit {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Ingestion.
//
// Canonical layout (written by synthgen): img_###.psim, lights.txt, mask.png,
// optional normal_gt.psnm.
//
// Benchmark adapter layout: filenames.txt (one image per line, 16-bit PNG or
// .psim), light_directions.txt and light_intensities.txt (one row of floats
// per image; RGB intensities are averaged), mask.png, optional normal_gt.psnm.

struct AdapterOptions {
  double gamma = 1.0;  // PNG values v in [0, 1] become v^gamma
};

ImageLightSet load_canonical_object(const fs::path& dir);
ImageLightSet load_benchmark_object(const fs::path& dir, const AdapterOptions& options = {});
/// Picks the adapter when filenames.txt exists, otherwise the canonical layout.
ImageLightSet load_object(const fs::path& dir, const AdapterOptions& options = {});

/// Images without lighting files: every *.png / *.psim except mask.png and
/// visualizations, sorted by name, plus mask.png (a full mask if absent).
ImageLightSet load_image_folder(const fs::path& dir, const AdapterOptions& options = {});

/// All objects below root: ids from manifest.json when present, otherwise
/// every subdirectory holding a mask.png, sorted; root itself if it is an
/// object directory.
std::vector<ImageLightSet> load_dataset(const fs::path& root, const AdapterOptions& options = {});

enum class ImageFormat { psim, png16 };

/// Writes the adapter layout. PNG output clamps radiance to [0, 1].
void save_benchmark_object(const fs::path& dir, const ImageLightSet& set, ImageFormat format = ImageFormat::psim);

/// Evenly spaced subset of at most max_images images (0 keeps all).
ImageLightSet subsample_images(const ImageLightSet& set, int max_images);

// ---------------------------------------------------------------------------
// Evaluation.

enum class EvalMode { uncalibrated, gt_lighting };

std::string eval_mode_name(EvalMode mode);
EvalMode parse_eval_mode(const std::string& name);

struct LightingError {
  double direction_deg = 0.0;  // mean angle between predicted and true directions
  double intensity_rel = 0.0;  // mean relative error after scaling both sets to unit mean
};

struct EvalReport {
  std::string mode;
  std::string checkpoint_hash;
  std::map<std::string, double> mae;             // degrees, per object
  std::map<std::string, int> images_used;        // M per object
  std::map<std::string, LightingError> lighting;  // uncalibrated mode only
  double average_mae = 0.0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  /// Aligned columns; benchmark objects first in the customary order, then
  /// the rest by name, then Average.
  std::string to_table() const;
};

struct EvalOptions {
  EvalMode mode = EvalMode::gt_lighting;
  int max_images = 0;
};

struct ObjectPrediction {
  NormalMap normals;
  std::optional<std::vector<LightSample>> lights;
  int images_used = 0;
};

ObjectPrediction predict(netcore::Predictor& predictor, const ImageLightSet& set, EvalMode mode);

/// Report from precomputed predictions (same order as objects).
EvalReport report_from_predictions(const std::vector<ImageLightSet>& objects,
                                   const std::vector<ObjectPrediction>& predictions, EvalMode mode);

EvalReport evaluate(const netcore::NetWeights& weights, const std::vector<ImageLightSet>& objects,
                    const EvalOptions& options = {});

LightingError lighting_error(const std::vector<LightSample>& pred, const std::vector<LightSample>& truth);

// ---------------------------------------------------------------------------
// Visualization.

/// 8-bit RGB, round((n + 1) / 2 * 255), black outside the mask.
std::vector<std::uint8_t> normal_to_rgb(const NormalMap& normals);
/// Jet-like color for t in [0, 1].
std::array<std::uint8_t, 3> error_color(double t);

struct ErrorMapFiles {
  fs::path error_map;
  fs::path normal_map;
};

/// Writes <out> (error colors, 0..max_degrees, black outside the mask) and
/// <out stem>_normals.png next to it.
ErrorMapFiles emit_error_map(const NormalMap& pred, const NormalMap& gt, const Mask& mask, const fs::path& out,
                             double max_degrees = 45.0);

/// Mean over channels of the per-channel min-max normalized features after
/// the final set pooling, times multiplier; zero outside the mask. Uses the
/// set's lights when present, otherwise the lighting network's estimate.
std::vector<float> mean_feature_map(const netcore::NetWeights& weights, const ImageLightSet& set,
                                    double multiplier = 1.0);

/// Writes the map as 8-bit grayscale (saturating at 1) plus a float .psim twin.
std::vector<float> emit_mean_feature_map(const netcore::NetWeights& weights, const ImageLightSet& set,
                                         const fs::path& out, double multiplier = 1.0);

}  // namespace psfuse::evalkit
