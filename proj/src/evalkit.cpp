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

#include "psfuse/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "psfuse/core/errors.hpp"
#include "psfuse/core/image_io.hpp"
#include "psfuse/core/metrics.hpp"
#include "psfuse/lightcodec.hpp"

namespace psfuse::evalkit {

using json = nlohmann::json;

namespace {

const std::vector<std::string>& benchmark_order() {
  static const std::vector<std::string> order{"Ball",   "Cat",    "Pot1",    "Bear", "Pot2",
                                              "Buddha", "Goblet", "Reading", "Cow",  "Harvest"};
  return order;
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw IngestionError("missing " + what + " file: " + path.string());
}

std::string object_name(const fs::path& dir) {
  auto p = dir;
  if (!p.has_filename()) p = p.parent_path();
  return p.filename().string();
}

Mask load_mask(const fs::path& dir, int height, int width, bool required) {
  const fs::path path = dir / "mask.png";
  if (!fs::exists(path)) {
    if (required) require_file(path, "mask");
    return Mask::full(height, width);
  }
  Mask m = io::read_mask_png(path);
  if (height > 0 && (m.height() != height || m.width() != width)) {
    throw ShapeError("mask " + path.string() + " is " + std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                     ", images are " + std::to_string(height) + "x" + std::to_string(width));
  }
  return m;
}

RadianceImage load_image(const fs::path& path, const AdapterOptions& options) {
  require_file(path, "image");
  if (path.extension() == ".psim") return io::read_radiance(path);
  const io::Png16 png = io::read_png16(path);
  std::vector<float> values(png.data.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = png.data[i] / 65535.0;
    values[i] = static_cast<float>(options.gamma == 1.0 ? v : std::pow(v, options.gamma));
  }
  return RadianceImage(png.height, png.width, png.channels, std::move(values));
}

void attach_normals(ImageLightSet& set, const fs::path& dir) {
  const fs::path path = dir / "normal_gt.psnm";
  if (fs::exists(path)) set.gt_normals = io::read_normal_map(path, set.mask);
}

void check_image_sizes(const ImageLightSet& set, const fs::path& dir) {
  for (const auto& img : set.images) {
    if (img.height() != set.images.front().height() || img.width() != set.images.front().width()) {
      throw ShapeError("images in " + dir.string() + " differ in size");
    }
  }
}

}  // namespace

ImageLightSet load_canonical_object(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("object directory not found: " + dir.string());
  ImageLightSet set;
  set.name = object_name(dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.starts_with("img_") && e.path().extension() == ".psim") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IngestionError("no img_*.psim images in " + dir.string());
  for (const auto& f : files) set.images.push_back(io::read_radiance(f));
  check_image_sizes(set, dir);
  set.mask = load_mask(dir, set.images.front().height(), set.images.front().width(), true);
  require_file(dir / "lights.txt", "lights");
  set.lights = io::read_lights(dir / "lights.txt");
  if (set.lights->size() != set.images.size()) {
    throw IngestionError(dir.string() + ": " + std::to_string(set.lights->size()) + " lights for " +
                         std::to_string(set.images.size()) + " images");
  }
  attach_normals(set, dir);
  set.validate();
  return set;
}

ImageLightSet load_benchmark_object(const fs::path& dir, const AdapterOptions& options) {
  if (!fs::is_directory(dir)) throw IngestionError("object directory not found: " + dir.string());
  ImageLightSet set;
  set.name = object_name(dir);
  require_file(dir / "filenames.txt", "image list (filenames.txt)");
  std::istringstream list(io::read_text(dir / "filenames.txt"));
  std::string line;
  while (std::getline(list, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    set.images.push_back(load_image(dir / line, options));
  }
  if (set.images.empty()) throw IngestionError("empty image list in " + (dir / "filenames.txt").string());
  check_image_sizes(set, dir);
  set.mask = load_mask(dir, set.images.front().height(), set.images.front().width(), true);

  require_file(dir / "light_directions.txt", "light directions");
  require_file(dir / "light_intensities.txt", "light intensities");
  const auto dirs = io::read_table(dir / "light_directions.txt");
  const auto ints = io::read_table(dir / "light_intensities.txt");
  if (dirs.size() != set.images.size() || ints.size() != set.images.size()) {
    throw IngestionError(dir.string() + ": lighting files list " + std::to_string(dirs.size()) + " directions and " +
                         std::to_string(ints.size()) + " intensities for " + std::to_string(set.images.size()) +
                         " images");
  }
  std::vector<LightSample> lights;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    if (dirs[i].size() != 3) throw IngestionError("light direction row " + std::to_string(i + 1) + " needs 3 values");
    if (ints[i].empty()) throw IngestionError("empty light intensity row " + std::to_string(i + 1));
    double e = 0.0;
    for (double v : ints[i]) e += v;
    e /= static_cast<double>(ints[i].size());
    try {
      lights.emplace_back(UnitVec3::normalize(dirs[i][0], dirs[i][1], dirs[i][2]), e);
    } catch (const Error& err) {
      throw IngestionError("light " + std::to_string(i + 1) + " in " + dir.string() + ": " + err.what());
    }
  }
  set.lights = std::move(lights);
  attach_normals(set, dir);
  set.validate();
  return set;
}

ImageLightSet load_object(const fs::path& dir, const AdapterOptions& options) {
  if (fs::exists(dir / "filenames.txt")) return load_benchmark_object(dir, options);
  return load_canonical_object(dir);
}

ImageLightSet load_image_folder(const fs::path& dir, const AdapterOptions& options) {
  if (!fs::is_directory(dir)) throw IngestionError("image directory not found: " + dir.string());
  ImageLightSet set;
  set.name = object_name(dir);
  std::vector<fs::path> files;
  if (fs::exists(dir / "filenames.txt")) {
    std::istringstream list(io::read_text(dir / "filenames.txt"));
    std::string line;
    while (std::getline(list, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) files.push_back(dir / line);
    }
  } else {
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto ext = e.path().extension();
      const auto name = e.path().filename().string();
      if (ext != ".png" && ext != ".psim") continue;
      if (name == "mask.png" || name == "height.psim" || name.find("normal") != std::string::npos ||
          name.find("error") != std::string::npos) {
        continue;
      }
      files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw IngestionError("no images found in " + dir.string());
  for (const auto& f : files) set.images.push_back(load_image(f, options));
  check_image_sizes(set, dir);
  set.mask = load_mask(dir, set.images.front().height(), set.images.front().width(), false);
  set.validate();
  return set;
}

std::vector<ImageLightSet> load_dataset(const fs::path& root, const AdapterOptions& options) {
  if (!fs::is_directory(root)) throw IngestionError("dataset directory not found: " + root.string());
  std::vector<fs::path> dirs;
  if (fs::exists(root / "manifest.json")) {
    try {
      const json doc = json::parse(io::read_text(root / "manifest.json"));
      for (const auto& s : doc.at("samples")) dirs.push_back(root / s.at("id").get<std::string>());
    } catch (const json::exception& e) {
      throw IngestionError("malformed manifest " + (root / "manifest.json").string() + ": " + e.what());
    }
  } else if (fs::exists(root / "mask.png")) {
    dirs.push_back(root);
  } else {
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory() && fs::exists(e.path() / "mask.png")) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
  }
  if (dirs.empty()) throw IngestionError("no objects found in " + root.string());
  std::vector<ImageLightSet> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) {
    try {
      out.push_back(load_object(d, options));
    } catch (const IngestionError&) {
      throw;
    } catch (const Error& e) {
      throw IngestionError("sample " + object_name(d) + ": " + e.what());
    }
  }
  return out;
}

void save_benchmark_object(const fs::path& dir, const ImageLightSet& set, ImageFormat format) {
  set.validate();
  if (!set.lights) throw DomainError("cannot save an object without lights in the benchmark layout");
  fs::create_directories(dir);
  std::ostringstream names, dirs, ints;
  char buf[128];
  for (int m = 0; m < set.size(); ++m) {
    std::snprintf(buf, sizeof(buf), "%03d", m + 1);
    const auto& img = set.images[m];
    std::string file;
    if (format == ImageFormat::psim) {
      file = std::string(buf) + ".psim";
      io::write_radiance(dir / file, img);
    } else {
      file = std::string(buf) + ".png";
      io::Png16 png{img.height(), img.width(), img.channels(), {}};
      for (float v : img.values()) {
        png.data.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 65535.0)));
      }
      io::write_png16(dir / file, png);
    }
    names << file << "\n";
    const auto& l = (*set.lights)[m];
    std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f\n", l.direction().x(), l.direction().y(), l.direction().z());
    dirs << buf;
    std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f\n", l.intensity(), l.intensity(), l.intensity());
    ints << buf;
  }
  io::write_text(dir / "filenames.txt", names.str());
  io::write_text(dir / "light_directions.txt", dirs.str());
  io::write_text(dir / "light_intensities.txt", ints.str());
  io::write_mask_png(dir / "mask.png", set.mask);
  if (set.gt_normals) io::write_normal_map(dir / "normal_gt.psnm", *set.gt_normals);
}

ImageLightSet subsample_images(const ImageLightSet& set, int max_images) {
  if (max_images <= 0 || set.size() <= max_images) return set;
  ImageLightSet out;
  out.name = set.name;
  out.mask = set.mask;
  out.gt_normals = set.gt_normals;
  std::vector<LightSample> lights;
  for (int k = 0; k < max_images; ++k) {
    const int i = static_cast<int>(static_cast<long>(k) * set.size() / max_images);
    out.images.push_back(set.images[i]);
    if (set.lights) lights.push_back((*set.lights)[i]);
  }
  if (set.lights) out.lights = std::move(lights);
  return out;
}

// ---------------------------------------------------------------------------

std::string eval_mode_name(EvalMode mode) { return mode == EvalMode::uncalibrated ? "uncalibrated" : "gt_lighting"; }

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "uncalibrated") return EvalMode::uncalibrated;
  if (name == "gt_lighting" || name == "gt-lighting") return EvalMode::gt_lighting;
  throw ConfigError("unknown evaluation mode '" + name + "' (expected uncalibrated or gt_lighting)");
}

std::string EvalReport::to_json() const {
  json objects = json::object();
  for (const auto& [name, v] : mae) {
    json o{{"mae", v}};
    if (auto it = images_used.find(name); it != images_used.end()) o["images"] = it->second;
    if (auto it = lighting.find(name); it != lighting.end()) {
      o["light_direction_error_deg"] = it->second.direction_deg;
      o["light_intensity_rel_error"] = it->second.intensity_rel;
    }
    objects[name] = o;
  }
  return json{{"mode", mode}, {"checkpoint", checkpoint_hash}, {"objects", objects}, {"average_mae", average_mae}}
      .dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.mode = j.at("mode").get<std::string>();
    r.checkpoint_hash = j.at("checkpoint").get<std::string>();
    r.average_mae = j.at("average_mae").get<double>();
    for (const auto& [name, o] : j.at("objects").items()) {
      r.mae[name] = o.at("mae").get<double>();
      if (o.contains("images")) r.images_used[name] = o.at("images").get<int>();
      if (o.contains("light_direction_error_deg")) {
        r.lighting[name] = {o.at("light_direction_error_deg").get<double>(),
                            o.at("light_intensity_rel_error").get<double>()};
      }
    }
    return r;
  } catch (const json::exception& e) {
    throw IngestionError(std::string("malformed evaluation report: ") + e.what());
  }
}

std::string EvalReport::to_table() const {
  std::vector<std::string> names;
  for (const auto& n : benchmark_order())
    if (mae.count(n)) names.push_back(n);
  for (const auto& [n, v] : mae)
    if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);

  const bool with_lights = !lighting.empty();
  std::size_t width = 8;
  for (const auto& n : names) width = std::max(width, n.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %10s", static_cast<int>(width), "object", "MAE");
  out << buf;
  if (with_lights) {
    std::snprintf(buf, sizeof(buf), " %12s %12s", "dir_err", "int_err");
    out << buf;
  }
  out << "\n";
  for (const auto& n : names) {
    std::snprintf(buf, sizeof(buf), "%-*s %10.3f", static_cast<int>(width), n.c_str(), mae.at(n));
    out << buf;
    if (with_lights) {
      if (auto it = lighting.find(n); it != lighting.end()) {
        std::snprintf(buf, sizeof(buf), " %12.3f %12.4f", it->second.direction_deg, it->second.intensity_rel);
        out << buf;
      }
    }
    out << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%-*s %10.3f\n", static_cast<int>(width), "Average", average_mae);
  out << buf;
  return out.str();
}

LightingError lighting_error(const std::vector<LightSample>& pred, const std::vector<LightSample>& truth) {
  if (pred.size() != truth.size() || pred.empty()) throw ShapeError("lighting error: light lists differ in length");
  double mean_p = 0.0, mean_t = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mean_p += pred[i].intensity();
    mean_t += truth[i].intensity();
  }
  mean_p /= static_cast<double>(pred.size());
  mean_t /= static_cast<double>(truth.size());
  LightingError e;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    e.direction_deg += angular_error(pred[i].direction(), truth[i].direction());
    const double t = truth[i].intensity() / mean_t;
    e.intensity_rel += std::abs(pred[i].intensity() / mean_p - t) / t;
  }
  e.direction_deg /= static_cast<double>(pred.size());
  e.intensity_rel /= static_cast<double>(pred.size());
  return e;
}

ObjectPrediction predict(netcore::Predictor& predictor, const ImageLightSet& set, EvalMode mode) {
  ObjectPrediction out;
  out.images_used = set.size();
  if (mode == EvalMode::gt_lighting) {
    if (!set.lights) throw DomainError("object " + set.name + " has no ground-truth lights");
    out.normals = predictor.normals(set, *set.lights);
  } else {
    auto est = predictor.lights(set);
    out.normals = predictor.normals(set, est.lights2);
    out.lights = std::move(est.lights2);
  }
  return out;
}

EvalReport report_from_predictions(const std::vector<ImageLightSet>& objects,
                                   const std::vector<ObjectPrediction>& predictions, EvalMode mode) {
  if (objects.empty()) throw DomainError("no objects to evaluate");
  if (objects.size() != predictions.size()) throw ShapeError("one prediction per object is required");
  EvalReport r;
  r.mode = eval_mode_name(mode);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& obj = objects[i];
    if (!obj.gt_normals) throw DomainError("object " + obj.name + " has no ground-truth normals");
    if (r.mae.count(obj.name)) throw DomainError("duplicate object name " + obj.name);
    r.mae[obj.name] = mean_angular_error(predictions[i].normals, *obj.gt_normals, obj.mask);
    r.images_used[obj.name] = predictions[i].images_used;
    if (predictions[i].lights && obj.lights) r.lighting[obj.name] = lighting_error(*predictions[i].lights, *obj.lights);
  }
  double sum = 0.0;
  for (const auto& [n, v] : r.mae) sum += v;
  r.average_mae = sum / static_cast<double>(r.mae.size());
  return r;
}

EvalReport evaluate(const netcore::NetWeights& weights, const std::vector<ImageLightSet>& objects,
                    const EvalOptions& options) {
  if (objects.empty()) throw DomainError("no objects to evaluate");
  for (const auto& obj : objects) {
    if (!obj.gt_normals) throw DomainError("object " + obj.name + " has no ground-truth normals");
  }
  netcore::Predictor predictor(weights);
  std::vector<ObjectPrediction> preds;
  preds.reserve(objects.size());
  for (const auto& obj : objects) {
    const ImageLightSet sub = subsample_images(obj, options.max_images);
    preds.push_back(predict(predictor, sub, options.mode));
  }
  EvalReport r = report_from_predictions(objects, preds, options.mode);
  r.checkpoint_hash = weights.content_hash();
  return r;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> normal_to_rgb(const NormalMap& normals) {
  const std::size_t n = static_cast<std::size_t>(normals.height()) * normals.width();
  std::vector<std::uint8_t> rgb(3 * n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    if (!normals.mask().inside(p)) continue;
    const auto v = normals.raw(p);
    for (int c = 0; c < 3; ++c) {
      const double x = std::clamp((static_cast<double>(v[c]) + 1.0) * 0.5 * 255.0, 0.0, 255.0);
      rgb[3 * p + c] = static_cast<std::uint8_t>(std::lround(x));
    }
  }
  return rgb;
}

std::array<std::uint8_t, 3> error_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto channel = [](double x) { return std::clamp(1.5 - std::abs(x), 0.0, 1.0); };
  const double x = 4.0 * t;
  const double r = channel(x - 3.0), g = channel(x - 2.0), b = channel(x - 1.0);
  return {static_cast<std::uint8_t>(std::lround(r * 255)), static_cast<std::uint8_t>(std::lround(g * 255)),
          static_cast<std::uint8_t>(std::lround(b * 255))};
}

ErrorMapFiles emit_error_map(const NormalMap& pred, const NormalMap& gt, const Mask& mask, const fs::path& out,
                             double max_degrees) {
  if (max_degrees <= 0.0) throw DomainError("error map scale must be positive");
  const auto err = angular_error_map(pred, gt, mask);
  const std::size_t n = static_cast<std::size_t>(mask.height()) * mask.width();
  std::vector<std::uint8_t> rgb(3 * n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    if (!mask.inside(p)) continue;
    const auto c = error_color(err[p] / max_degrees);
    std::copy(c.begin(), c.end(), rgb.begin() + 3 * p);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  ErrorMapFiles files{out, out.parent_path() / (out.stem().string() + "_normals.png")};
  io::write_png8(files.error_map, mask.height(), mask.width(), 3, rgb);
  io::write_png8(files.normal_map, pred.height(), pred.width(), 3, normal_to_rgb(pred));
  return files;
}

std::vector<float> mean_feature_map(const netcore::NetWeights& weights, const ImageLightSet& set,
                                    double multiplier) {
  netcore::Predictor predictor(weights);
  std::vector<LightSample> lights = set.lights ? *set.lights : predictor.lights(set).lights2;
  const auto f = predictor.pooled_features(set, lights);
  const std::size_t hw = f.plane_size();
  std::vector<double> acc(hw, 0.0);
  for (int c = 0; c < f.c(); ++c) {
    const float* ch = f.plane(0, c);
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t p = 0; p < hw; ++p) {
      if (!set.mask.inside(p)) continue;
      lo = std::min(lo, static_cast<double>(ch[p]));
      hi = std::max(hi, static_cast<double>(ch[p]));
    }
    if (!(hi > lo)) continue;  // constant channel contributes zero
    for (std::size_t p = 0; p < hw; ++p)
      if (set.mask.inside(p)) acc[p] += (ch[p] - lo) / (hi - lo);
  }
  std::vector<float> out(hw, 0.0f);
  for (std::size_t p = 0; p < hw; ++p) out[p] = static_cast<float>(acc[p] / f.c() * multiplier);
  return out;
}

std::vector<float> emit_mean_feature_map(const netcore::NetWeights& weights, const ImageLightSet& set,
                                         const fs::path& out, double multiplier) {
  auto map = mean_feature_map(weights, set, multiplier);
  std::vector<std::uint8_t> gray(map.size());
  for (std::size_t p = 0; p < map.size(); ++p) {
    gray[p] = static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(map[p]), 0.0, 1.0) * 255.0));
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_png8(out, set.height(), set.width(), 1, gray);
  io::write_float_image(out.parent_path() / (out.stem().string() + ".psim"),
                        io::FloatImage{set.height(), set.width(), 1, map});
  return map;
}

}  // namespace psfuse::evalkit
