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

#include <cmath>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "psfuse/classic.hpp"
#include "psfuse/core/image_io.hpp"
#include "psfuse/core/metrics.hpp"
#include "psfuse/synthgen.hpp"
#include "test_util.hpp"

using namespace psfuse;
using namespace psfuse::synthgen;
namespace fs = std::filesystem;

namespace {

const UnitVec3 kView = UnitVec3::normalize(0, 0, 1);

SurfacePatch flat(int res) {
  return surface_from_heightfield(std::vector<double>(res * res, 0.0), res, Mask::full(res, res));
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("heightfield normals") {
  const auto f = flat(16);
  for (std::size_t p = 0; p < 256; ++p) CHECK(f.normals.raw(p) == std::array<float, 3>{0, 0, 1});

  const int res = 301, c = 150;
  const double r = 100.0 * std::sqrt(2.0);
  std::vector<double> h(res * res, 0.0);
  for (int row = 0; row < res; ++row)
    for (int col = 0; col < res; ++col) {
      const double x = col - c, y = c - row;
      h[row * res + col] = std::sqrt(std::max(0.0, r * r - x * x - y * y));
    }
  const auto s = surface_from_heightfield(h, res, Mask::full(res, res));
  const auto center = s.normals.raw(c, c);
  CHECK(std::abs(center[0]) < 1e-6);
  CHECK(std::abs(center[1]) < 1e-6);
  CHECK(center[2] == doctest::Approx(1.0));
  const auto side = s.normals.raw(c, c + 100);
  CHECK(std::abs(side[0] - 1.0 / std::sqrt(2.0)) < 1e-3);
  CHECK(std::abs(side[1]) < 1e-6);
  // y points up: a point above the center tilts toward +y
  CHECK(s.normals.raw(c - 100, c)[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-3));

  const auto a = make_blob_surface(42, 32), b = make_blob_surface(42, 32);
  CHECK(a.heightfield == b.heightfield);
  CHECK(std::equal(a.normals.data().begin(), a.normals.data().end(), b.normals.data().begin()));
  CHECK(make_blob_surface(43, 32).heightfield != a.heightfield);
}

TEST_CASE("light sampling") {
  Rng rng(3);
  const auto pole = sample_light(rng, {90, 90}, {1, 1});
  CHECK(pole.direction().x() == doctest::Approx(0.0));
  CHECK(pole.direction().z() == doctest::Approx(1.0));
  for (int i = 0; i < 1000; ++i) {
    const auto l = sample_light(rng, {20, 90}, {0.2, 2.0});
    CHECK(l.direction().z() > 0);
    CHECK(l.intensity() >= 0.2);
    CHECK(l.intensity() <= 2.0);
    CHECK(std::asin(l.direction().z()) * 180 / M_PI >= 20.0 - 1e-9);
  }
  Rng r1(9), r2(9);
  CHECK(sample_light(r1, {20, 90}, {0.2, 2}) == sample_light(r2, {20, 90}, {0.2, 2}));
  CHECK_THROWS_AS(sample_light(r1, {50, 40}, {0.2, 2}), DomainError);
}

TEST_CASE("rendering") {
  const auto s = flat(16);
  BrdfSpec lamb;
  lamb.albedo = {0.5, 0.5, 0.5};
  const auto img = render(s, lamb, LightSample(kView, 2.0), kView);
  CHECK(img.at(3, 4, 1) == doctest::Approx(1.0).epsilon(1e-7));

  // light from below the tangent plane of a tilted surface
  std::vector<double> ramp(16 * 16);
  for (int row = 0; row < 16; ++row)
    for (int col = 0; col < 16; ++col) ramp[row * 16 + col] = -3.0 * col;
  const auto tilted = surface_from_heightfield(ramp, 16, Mask::full(16, 16));
  const auto dark = render(tilted, lamb, LightSample(UnitVec3::normalize(-1, 0, 0.1), 1.0), kView);
  CHECK(dark.at(8, 8, 0) == 0.0f);

  BrdfSpec spec;
  spec.kind = BrdfKind::blinn_phong;
  spec.albedo = {0.5, 0.5, 0.5};
  spec.specular_strength = 0.3;
  spec.shininess = 10;
  CHECK(render(s, spec, LightSample(kView, 1.0), kView).at(0, 0, 2) == doctest::Approx(0.8).epsilon(1e-7));

  BrdfSpec bad;
  bad.albedo = {0.5, 0.0, 0.5};
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("generated samples") {
  GenConfig cfg;
  cfg.seed = 5;
  cfg.num_surfaces = 6;
  cfg.lights_per_surface = 6;
  for (int i = 0; i < cfg.num_surfaces; ++i) {
    const auto g = generate_sample(cfg, i);
    const auto xyz = heightfield_normals(g.surface.heightfield, cfg.resolution);
    double worst = 0;
    for (std::size_t k = 0; k < xyz.size(); ++k) worst = std::max(worst, double(std::abs(xyz[k] - g.surface.normals.data()[k])));
    CHECK(worst <= 1e-6);
    for (int m = 0; m < g.set.size(); ++m) {
      const auto& img = g.set.images[m];
      for (float v : img.values()) CHECK(v >= 0.0f);
      // linearity in the light intensity
      const auto& l = (*g.set.lights)[m];
      const auto twice = render(g.surface, g.record.brdf, LightSample(l.direction(), 2 * l.intensity()), kView);
      for (std::size_t k = 0; k < img.values().size(); k += 7) {
        CHECK(twice.values()[k] == doctest::Approx(2.0 * img.values()[k]).epsilon(1e-6));
      }
    }
  }
  const auto a = generate_sample(cfg, 2), b = generate_sample(cfg, 2);
  CHECK(std::equal(a.set.images[0].values().begin(), a.set.images[0].values().end(),
                   b.set.images[0].values().begin()));
}

TEST_CASE("rendered Lambertian samples solve back to their normals") {
  GenConfig cfg;
  cfg.seed = 17;
  cfg.num_surfaces = 10;
  cfg.lights_per_surface = 8;
  cfg.lambertian_fraction = 1.0;
  for (int i = 0; i < cfg.num_surfaces; ++i) {
    auto g = generate_sample(cfg, i);
    std::vector<std::uint8_t> lit(g.set.mask.data().begin(), g.set.mask.data().end());
    for (std::size_t p = 0; p < lit.size(); ++p) {
      for (const auto& img : g.set.images) {
        if (img.values()[p * 3] <= 0.0f) lit[p] = 0;
      }
    }
    g.set.mask = Mask(cfg.resolution, cfg.resolution, lit);
    const auto sol = classic::solve_lambertian(g.set);
    CHECK(mean_angular_error(sol.normals, g.surface.normals, g.set.mask) < 0.1);
  }
}

TEST_CASE("dataset layout") {
  const auto dir = testutil::scratch_dir("synthgen_ds");
  GenConfig cfg;
  cfg.seed = 1;
  cfg.num_surfaces = 2;
  cfg.lights_per_surface = 4;
  const auto man = generate_dataset(cfg, dir / "a");
  REQUIRE(man.samples.size() == 2);
  CHECK(fs::exists(dir / "a" / "manifest.json"));
  for (const auto& rec : man.samples) {
    const auto d = dir / "a" / rec.id;
    int images = 0;
    for (const auto& e : fs::directory_iterator(d)) images += e.path().extension() == ".psim" && e.path().stem() != "height";
    CHECK(images == 4);
    CHECK(fs::exists(d / "lights.txt"));
    CHECK(fs::exists(d / "mask.png"));
    CHECK(fs::exists(d / "normal_gt.psnm"));
    CHECK(io::read_lights(d / "lights.txt").size() == 4);
  }
  generate_dataset(cfg, dir / "b", 2);
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    if (rel == "manifest.json") continue;
    INFO(rel.string());
    CHECK(slurp(e.path()) == slurp(dir / "b" / rel));
  }
  GenConfig bad = cfg;
  bad.resolution = 8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.lights_per_surface = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
