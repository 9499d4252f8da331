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

#include "psfuse/synthgen.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "psfuse/core/hash.hpp"
#include "psfuse/core/image_io.hpp"

namespace psfuse::synthgen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_range(const Range& r, const char* name, bool positive) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw ConfigError(std::string(name) + " range is empty");
  }
  if (positive && !(r.lo > 0.0)) throw ConfigError(std::string(name) + " range must be positive");
}

double uniform(Rng& rng, const Range& r) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

double log_uniform(Rng& rng, const Range& r) {
  if (r.lo == r.hi) return r.lo;
  return std::exp(std::uniform_real_distribution<double>(std::log(r.lo), std::log(r.hi))(rng));
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

json brdf_json(const BrdfSpec& b) {
  return json{{"kind", brdf_kind_name(b.kind)},
              {"albedo", b.albedo},
              {"specular_strength", b.specular_strength},
              {"shininess", b.shininess}};
}

json config_json(const GenConfig& c) {
  return json{{"seed", c.seed},
              {"num_surfaces", c.num_surfaces},
              {"lights_per_surface", c.lights_per_surface},
              {"resolution", c.resolution},
              {"albedo_range", range_json(c.albedo_range)},
              {"specular_range", range_json(c.specular_range)},
              {"shininess_range", range_json(c.shininess_range)},
              {"intensity_range", range_json(c.intensity_range)},
              {"elevation_range", range_json(c.elevation_range)},
              {"lambertian_fraction", c.lambertian_fraction},
              {"noise_sigma", c.noise_sigma},
              {"export_png16", c.export_png16},
              {"png16_scale", c.png16_scale}};
}

std::string sample_id(int index) {
  std::ostringstream os;
  os << 's' << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

std::string image_name(int index, const char* ext) {
  std::ostringstream os;
  os << "img_" << std::setw(3) << std::setfill('0') << index << ext;
  return os.str();
}

}  // namespace

std::string brdf_kind_name(BrdfKind kind) { return kind == BrdfKind::lambertian ? "lambertian" : "blinn_phong"; }

void BrdfSpec::validate() const {
  for (double a : albedo) {
    if (!(a > 0.0)) throw DomainError("albedo must be strictly positive");
  }
  if (kind == BrdfKind::blinn_phong) {
    if (!(specular_strength >= 0.0)) throw DomainError("specular strength must be non-negative");
    if (!(shininess >= 1.0)) throw DomainError("shininess must be at least 1");
  }
}

void GenConfig::validate() const {
  if (resolution < 16) throw ConfigError("resolution must be at least 16");
  if (lights_per_surface < 2) throw ConfigError("at least 2 lights per surface are required");
  if (num_surfaces < 1) throw ConfigError("at least one surface is required");
  check_range(albedo_range, "albedo", true);
  if (albedo_range.hi > 1.0) throw ConfigError("albedo range must lie in (0, 1]");
  check_range(specular_range, "specular", false);
  check_range(shininess_range, "shininess", true);
  if (shininess_range.lo < 1.0) throw ConfigError("shininess must be at least 1");
  check_range(intensity_range, "intensity", true);
  check_range(elevation_range, "elevation", true);
  if (elevation_range.hi > 90.0) throw ConfigError("elevation range must lie in (0, 90]");
  if (lambertian_fraction < 0.0 || lambertian_fraction > 1.0) throw ConfigError("lambertian fraction not in [0, 1]");
  if (noise_sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
}

std::string GenConfig::hash() const {
  Fnv1a h;
  h.update(config_json(*this).dump());
  return h.hex();
}

std::vector<float> heightfield_normals(const std::vector<double>& h, int res) {
  std::vector<float> xyz(static_cast<std::size_t>(res) * res * 3);
  auto at = [&](int r, int c) { return h[static_cast<std::size_t>(r) * res + c]; };
  for (int r = 0; r < res; ++r) {
    for (int c = 0; c < res; ++c) {
      const int c0 = std::max(c - 1, 0), c1 = std::min(c + 1, res - 1);
      const int r0 = std::max(r - 1, 0), r1 = std::min(r + 1, res - 1);
      const double dhdx = (at(r, c1) - at(r, c0)) / (c1 - c0);
      // y points up, rows go down.
      const double dhdy = -(at(r1, c) - at(r0, c)) / (r1 - r0);
      const UnitVec3 n = UnitVec3::normalize(-dhdx, -dhdy, 1.0);
      const std::size_t p = static_cast<std::size_t>(r) * res + c;
      xyz[3 * p] = static_cast<float>(n.x());
      xyz[3 * p + 1] = static_cast<float>(n.y());
      xyz[3 * p + 2] = static_cast<float>(n.z());
    }
  }
  return xyz;
}

SurfacePatch surface_from_heightfield(std::vector<double> heights, int resolution, const Mask& mask) {
  if (resolution < 2 || heights.size() != static_cast<std::size_t>(resolution) * resolution) {
    throw ShapeError("heightfield size does not match resolution");
  }
  if (mask.height() != resolution || mask.width() != resolution) throw ShapeError("mask does not match heightfield");
  SurfacePatch s;
  s.resolution = resolution;
  const auto xyz = heightfield_normals(heights, resolution);
  s.heightfield = std::move(heights);
  s.normals = NormalMap::from_vectors(mask, xyz);
  s.mask = mask;
  return s;
}

SurfacePatch make_blob_surface(std::uint64_t seed, int resolution) {
  if (resolution < 16) throw ConfigError("resolution must be at least 16");
  Rng rng(seed);
  const int bumps = std::uniform_int_distribution<int>(3, 8)(rng);
  std::uniform_real_distribution<double> pos(0.0, resolution);
  std::uniform_real_distribution<double> width(0.08 * resolution, 0.25 * resolution);
  std::uniform_real_distribution<double> amp(-1.5, 1.5);
  struct Bump {
    double cx, cy, sigma, height;
  };
  std::vector<Bump> list;
  for (int b = 0; b < bumps; ++b) {
    Bump bump{pos(rng), pos(rng), width(rng), 0.0};
    bump.height = amp(rng) * bump.sigma;
    list.push_back(bump);
  }
  std::vector<double> h(static_cast<std::size_t>(resolution) * resolution, 0.0);
  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) {
      double v = 0.0;
      for (const auto& b : list) {
        const double dx = c - b.cx, dy = r - b.cy;
        v += b.height * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      }
      // Stored heights are float32, so derive normals from the same values.
      h[static_cast<std::size_t>(r) * resolution + c] = static_cast<float>(v);
    }
  }
  return surface_from_heightfield(std::move(h), resolution, Mask::full(resolution, resolution));
}

LightSample sample_light(Rng& rng, Range elevation_deg, Range intensity) {
  if (!(elevation_deg.lo <= elevation_deg.hi) || !(elevation_deg.lo > 0.0) || elevation_deg.hi > 90.0) {
    throw DomainError("elevation range must be a nonempty subset of (0, 90]");
  }
  if (!(intensity.lo <= intensity.hi) || !(intensity.lo > 0.0)) {
    throw DomainError("intensity range must be nonempty and positive");
  }
  const double az = std::uniform_real_distribution<double>(0.0, 360.0)(rng) * kDeg;
  const double el_deg = uniform(rng, elevation_deg);
  const double e = uniform(rng, intensity);
  if (el_deg == 90.0) return LightSample(UnitVec3::normalize(0.0, 0.0, 1.0), e);
  const double el = el_deg * kDeg;
  return LightSample(UnitVec3::normalize(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)), e);
}

RadianceImage render(const SurfacePatch& surface, const BrdfSpec& brdf, const LightSample& light,
                     const UnitVec3& view) {
  brdf.validate();
  const int res = surface.resolution;
  RadianceImage img(res, res, 3);
  const auto& l = light.direction();
  const double e = light.intensity();
  const auto half = UnitVec3::try_normalize(l.x() + view.x(), l.y() + view.y(), l.z() + view.z());
  for (int r = 0; r < res; ++r) {
    for (int c = 0; c < res; ++c) {
      if (!surface.mask.inside(r, c)) continue;
      const auto n = surface.normals.raw(r, c);
      const double ndotl = n[0] * l.x() + n[1] * l.y() + n[2] * l.z();
      if (ndotl <= 0.0) continue;
      double spec = 0.0;
      if (brdf.kind == BrdfKind::blinn_phong && half && brdf.specular_strength > 0.0) {
        const double ndoth = n[0] * half->x() + n[1] * half->y() + n[2] * half->z();
        spec = brdf.specular_strength * std::pow(std::max(0.0, ndoth), brdf.shininess);
      }
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = static_cast<float>(e * (brdf.albedo[ch] * ndotl + spec));
    }
  }
  return img;
}

GeneratedSample generate_sample(const GenConfig& cfg, int index) {
  cfg.validate();
  GeneratedSample out;
  out.record.id = sample_id(index);
  out.record.seed = splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
  out.surface = make_blob_surface(out.record.seed, cfg.resolution);

  Rng rng(splitmix64(out.record.seed ^ 0x5bd1e995ULL));
  BrdfSpec brdf;
  const bool lambertian = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.lambertian_fraction;
  brdf.kind = lambertian ? BrdfKind::lambertian : BrdfKind::blinn_phong;
  const double base = log_uniform(rng, cfg.albedo_range);
  for (double& a : brdf.albedo) {
    a = std::clamp(base * uniform(rng, Range{0.8, 1.2}), cfg.albedo_range.lo, cfg.albedo_range.hi);
  }
  const double ks = uniform(rng, cfg.specular_range);
  const double alpha = log_uniform(rng, cfg.shininess_range);
  if (!lambertian) {
    brdf.specular_strength = ks;
    brdf.shininess = alpha;
  }
  out.record.brdf = brdf;

  const UnitVec3 view = UnitVec3::normalize(0.0, 0.0, 1.0);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
  ImageLightSet& set = out.set;
  set.name = out.record.id;
  set.mask = out.surface.mask;
  set.lights.emplace();
  for (int m = 0; m < cfg.lights_per_surface; ++m) {
    LightSample light = sample_light(rng, cfg.elevation_range, cfg.intensity_range);
    RadianceImage img = render(out.surface, brdf, light, view);
    if (cfg.noise_sigma > 0.0) {
      for (float& v : img.values()) v = static_cast<float>(std::max(0.0, v + noise(rng)));
      for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c)
          if (!set.mask.inside(r, c))
            for (int ch = 0; ch < img.channels(); ++ch) img.at(r, c, ch) = 0.0f;
    }
    set.images.push_back(std::move(img));
    set.lights->push_back(light);
  }
  set.gt_normals = out.surface.normals;
  return out;
}

namespace {

void write_sample(const GenConfig& cfg, const GeneratedSample& s, const fs::path& dir) {
  fs::create_directories(dir);
  for (int m = 0; m < s.set.size(); ++m) {
    io::write_radiance(dir / image_name(m, ".psim"), s.set.images[m]);
    if (cfg.export_png16) {
      const auto& img = s.set.images[m];
      io::Png16 png{img.height(), img.width(), img.channels(), {}};
      png.data.reserve(img.values().size());
      for (float v : img.values()) {
        png.data.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(v * cfg.png16_scale, 0.0, 1.0) * 65535.0)));
      }
      io::write_png16(dir / image_name(m, ".png"), png);
    }
  }
  io::write_lights(dir / "lights.txt", *s.set.lights);
  io::write_mask_png(dir / "mask.png", s.set.mask);
  io::write_normal_map(dir / "normal_gt.psnm", *s.set.gt_normals);
  io::FloatImage height{s.surface.resolution, s.surface.resolution, 1, {}};
  height.values.assign(s.surface.heightfield.begin(), s.surface.heightfield.end());
  io::write_float_image(dir / "height.psim", height);
  json meta{{"id", s.record.id},
            {"seed", s.record.seed},
            {"resolution", s.surface.resolution},
            {"num_images", s.set.size()},
            {"brdf", brdf_json(s.record.brdf)}};
  io::write_text(dir / "meta.json", meta.dump(2) + "\n");
}

}  // namespace

DatasetManifest generate_dataset(const GenConfig& cfg, const fs::path& out_dir, int workers) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.config_hash = cfg.hash();
  manifest.samples.resize(cfg.num_surfaces);

  auto work = [&](int begin, int stride, std::exception_ptr& error) {
    try {
      for (int i = begin; i < cfg.num_surfaces; i += stride) {
        GeneratedSample s = generate_sample(cfg, i);
        write_sample(cfg, s, out_dir / s.record.id);
        manifest.samples[i] = s.record;
      }
    } catch (...) {
      error = std::current_exception();
    }
  };
  workers = std::max(1, workers);
  std::vector<std::exception_ptr> errors(workers);
  if (workers == 1) {
    work(0, 1, errors[0]);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w, workers, std::ref(errors[w]));
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  json samples = json::array();
  for (const auto& s : manifest.samples) {
    samples.push_back(json{{"id", s.id}, {"seed", s.seed}, {"brdf", brdf_json(s.brdf)}});
  }
  json doc{{"config", config_json(cfg)}, {"config_hash", manifest.config_hash}, {"samples", samples}};
  io::write_text(out_dir / "manifest.json", doc.dump(2) + "\n");
  return manifest;
}

}  // namespace psfuse::synthgen
