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
#include <numbers>

#include "doctest.h"
#include "psfuse/core/errors.hpp"
#include "psfuse/core/hash.hpp"
#include "psfuse/core/image_io.hpp"
#include "psfuse/core/metrics.hpp"
#include "psfuse/core/types.hpp"
#include "test_util.hpp"

using namespace psfuse;

namespace {

NormalMap constant_map(int h, int w, double x, double y, double z) {
  const auto u = UnitVec3::normalize(x, y, z);
  std::vector<float> xyz;
  for (int p = 0; p < h * w; ++p) {
    xyz.push_back(static_cast<float>(u.x()));
    xyz.push_back(static_cast<float>(u.y()));
    xyz.push_back(static_cast<float>(u.z()));
  }
  return NormalMap::from_vectors(Mask::full(h, w), xyz);
}

}  // namespace

TEST_CASE("unit vectors only come from normalization") {
  const auto u = UnitVec3::normalize(3, 0, 4);
  CHECK(u.x() == doctest::Approx(0.6));
  CHECK(u.z() == doctest::Approx(0.8));
  CHECK_THROWS_AS(UnitVec3::normalize(0, 0, 0), DomainError);
  CHECK_FALSE(UnitVec3::try_normalize(NAN, 0, 1).has_value());
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const auto v = testutil::random_unit(rng);
    CHECK(std::abs(v.dot(v) - 1.0) < 1e-12);
  }
}

TEST_CASE("angular error") {
  const auto z = UnitVec3::normalize(0, 0, 1);
  CHECK(angular_error(z, z) == 0.0);
  CHECK(angular_error(z, UnitVec3::normalize(1, 0, 0)) == doctest::Approx(90.0));
  const double s = std::sin(std::numbers::pi / 6), c = std::cos(std::numbers::pi / 6);
  CHECK(angular_error(z, UnitVec3::normalize(0, s, c)) == doctest::Approx(30.0).epsilon(1e-12));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto a = testutil::random_unit(rng), b = testutil::random_unit(rng);
    CHECK(angular_error(a, b) == angular_error(b, a));
    CHECK(angular_error(a, a) == 0.0);
    CHECK(angular_error(a, -a) == doctest::Approx(180.0));
  }
}

TEST_CASE("mean angular error") {
  const auto gt = constant_map(8, 8, 0, 0, 1);
  CHECK(mean_angular_error(gt, gt, gt.mask()) == 0.0);
  CHECK(mean_angular_error(constant_map(8, 8, 1, 0, 0), gt, gt.mask()) == doctest::Approx(90.0));

  SUBCASE("two-pixel mean") {
    std::vector<std::uint8_t> inside(64, 0);
    inside[0] = inside[9] = 1;
    const Mask mask(8, 8, inside);
    std::vector<float> xyz(3 * 64, 0.0f), ref(3 * 64, 0.0f);
    const double a = 10.0 * std::numbers::pi / 180, b = 20.0 * std::numbers::pi / 180;
    xyz[0] = static_cast<float>(std::sin(a));
    xyz[2] = static_cast<float>(std::cos(a));
    xyz[27] = static_cast<float>(std::sin(b));
    xyz[29] = static_cast<float>(std::cos(b));
    ref[2] = ref[29] = 1.0f;
    const auto pred = NormalMap::from_vectors(mask, xyz);
    const auto truth = NormalMap::from_vectors(mask, ref);
    CHECK(mean_angular_error(pred, truth, mask) == doctest::Approx(15.0).epsilon(1e-6));
  }

  SUBCASE("unmasked pixels are ignored") {
    std::vector<std::uint8_t> inside(64, 1);
    inside[5] = 0;
    const Mask mask(8, 8, inside);
    auto v1 = std::vector<float>(gt.data().begin(), gt.data().end());
    auto v2 = v1;
    v2[15] = 1.0f;
    v2[17] = 0.0f;
    const auto a = NormalMap::from_vectors(Mask::full(8, 8), v1);
    const auto b = NormalMap::from_vectors(Mask::full(8, 8), v2);
    CHECK(mean_angular_error(b, a, mask) == 0.0);
  }

  CHECK_THROWS_AS(mean_angular_error(constant_map(8, 9, 0, 0, 1), gt, gt.mask()), ShapeError);
}

TEST_CASE("normalize by intensity") {
  std::mt19937_64 rng(1);
  auto set = testutil::random_set(1, 8, 8, 3, rng);
  const auto& img = set.images[0];
  const auto same = normalize_by_intensity(img, 1.0);
  CHECK(std::equal(same.values().begin(), same.values().end(), img.values().begin()));
  const auto half = normalize_by_intensity(img, 2.0);
  for (std::size_t i = 0; i < img.values().size(); ++i) CHECK(half.values()[i] == img.values()[i] / 2.0f);
  CHECK_THROWS_AS(normalize_by_intensity(img, 0.0), DomainError);
  CHECK_THROWS_AS(normalize_by_intensity(img, -1.0), DomainError);
  const auto back = normalize_by_intensity(normalize_by_intensity(img, 3.7), 1.0 / 3.7);
  for (std::size_t i = 0; i < img.values().size(); ++i) {
    CHECK(std::abs(back.values()[i] - img.values()[i]) <= 1e-6 * std::max(1e-6f, img.values()[i]));
  }
}

TEST_CASE("type invariants") {
  CHECK_THROWS_AS(RadianceImage(7, 8, 1), ShapeError);
  CHECK_THROWS_AS(RadianceImage(8, 8, 2), ShapeError);
  RadianceImage img(8, 8, 1);
  img.at(0, 0, 0) = -1.0f;
  CHECK_THROWS_AS(img.validate(), DomainError);
  CHECK_THROWS_AS(Mask(8, 8, std::vector<std::uint8_t>(64, 0)), DomainError);
  CHECK_THROWS_AS(LightSample(UnitVec3::normalize(0, 0, -1), 1.0), DomainError);
  CHECK_THROWS_AS(LightSample(UnitVec3::normalize(0, 0, 1), 0.0), DomainError);

  std::vector<float> bad(3 * 64, 0.0f);
  for (int p = 0; p < 64; ++p) bad[3 * p + 2] = 1.1f;
  CHECK_THROWS_AS(NormalMap::from_unit_vectors(Mask::full(8, 8), bad), DomainError);

  std::vector<std::uint8_t> inside(64, 1);
  inside[3] = 0;
  std::vector<float> xyz(3 * 64, 0.0f);
  for (int p = 0; p < 64; ++p) xyz[3 * p + 2] = 2.0f;
  const auto n = NormalMap::from_vectors(Mask(8, 8, inside), xyz);
  CHECK(n.raw(3) == std::array<float, 3>{0, 0, 0});
  CHECK(n.raw(4)[2] == 1.0f);

  std::mt19937_64 rng(2);
  auto set = testutil::random_set(3, 8, 8, 1, rng);
  set.validate();
  set.lights->pop_back();
  CHECK_THROWS_AS(set.validate(), ShapeError);
}

TEST_CASE("binary containers round trip") {
  const auto dir = testutil::scratch_dir("core_io");
  std::mt19937_64 rng(5);
  std::vector<std::uint8_t> inside(12 * 10, 1);
  inside[7] = inside[50] = 0;
  const Mask mask(12, 10, inside);
  std::vector<float> xyz;
  for (int p = 0; p < 120; ++p) {
    const auto u = testutil::random_unit(rng, true);
    xyz.insert(xyz.end(), {static_cast<float>(u.x()), static_cast<float>(u.y()), static_cast<float>(u.z())});
  }
  const auto normals = NormalMap::from_vectors(mask, xyz);
  io::write_normal_map(dir / "n.psnm", normals);
  const auto back = io::read_normal_map(dir / "n.psnm");
  CHECK(back.mask() == mask);
  CHECK(std::equal(back.data().begin(), back.data().end(), normals.data().begin()));

  auto set = testutil::random_set(1, 9, 11, 3, rng);
  io::write_radiance(dir / "img.psim", set.images[0]);
  const auto img = io::read_radiance(dir / "img.psim");
  CHECK(img.height() == 9);
  CHECK(img.width() == 11);
  CHECK(std::equal(img.values().begin(), img.values().end(), set.images[0].values().begin()));

  io::write_mask_png(dir / "mask.png", mask);
  CHECK(io::read_mask_png(dir / "mask.png") == mask);

  io::Png16 png{9, 8, 3, {}};
  for (int i = 0; i < 9 * 8 * 3; ++i) png.data.push_back(static_cast<std::uint16_t>(i * 300));
  io::write_png16(dir / "p16.png", png);
  const auto p = io::read_png16(dir / "p16.png");
  CHECK(p.channels == 3);
  CHECK(p.data == png.data);

  io::write_lights(dir / "lights.txt", *set.lights);
  const auto lights = io::read_lights(dir / "lights.txt");
  REQUIRE(lights.size() == 1);
  CHECK(std::abs(lights[0].intensity() - (*set.lights)[0].intensity()) < 1e-5);

  io::write_text(dir / "bad.txt", "1 2 x\n");
  CHECK_THROWS_AS(io::read_table(dir / "bad.txt"), IngestionError);
  CHECK_THROWS_AS(io::read_normal_map(dir / "missing.psnm"), IoError);
  io::write_text(dir / "junk.psnm", "JUNKJUNKJUNK");
  CHECK_THROWS_AS(io::read_normal_map(dir / "junk.psnm"), IoError);
}

TEST_CASE("fnv1a digest") {
  Fnv1a h;
  h.update(std::string_view("a"));
  CHECK(h.digest() == 0xaf63dc4c8601ec8cULL);
  CHECK(Fnv1a{}.hex() == "cbf29ce484222325");
}
