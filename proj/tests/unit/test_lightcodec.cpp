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
#include <random>

#include "doctest.h"
#include "psfuse/core/metrics.hpp"
#include "psfuse/lightcodec.hpp"
#include "test_util.hpp"

using namespace psfuse;
using namespace psfuse::lightcodec;

namespace {

LightSample light(double x, double y, double z, double e = 1.0) { return {UnitVec3::normalize(x, y, z), e}; }

}  // namespace

TEST_CASE("bin conventions") {
  const auto grazing = encode(light(1, 0, 1e-9));
  CHECK(grazing.azimuth_bin == 0);
  CHECK(grazing.elevation_bin == 0);

  const auto pole = encode(light(0, 0, 1));
  CHECK(pole.azimuth_bin == 0);
  CHECK(pole.elevation_bin == 31);

  CHECK(encode(light(0, 0, 1, 0.2)).intensity_bin == 0);
  CHECK(encode(light(0, 0, 1, 2.0)).intensity_bin == 31);

  // azimuth 90 degrees starts bin 8
  CHECK(encode(light(0, 1, 1)).azimuth_bin == 8);
  CHECK(encode(light(-1, 1e-9, 1)).azimuth_bin == 15);
  CHECK(encode(light(-1, -1e-9, 1)).azimuth_bin == 16);
}

TEST_CASE("decode evaluates bin centers") {
  const auto top = decode({0, 31, 15});
  CHECK(top.direction().z() == doctest::Approx(std::sin((31.5 * 90.0 / 32) * std::numbers::pi / 180)).epsilon(1e-12));
  CHECK(std::abs(top.direction().z() - std::sin((31.5 * 90.0 / 32) * std::numbers::pi / 180)) < 1e-9);
  // log-space center of the middle bins
  const double e15 = std::exp(std::log(0.2) + 15.5 / 32 * (std::log(2.0) - std::log(0.2)));
  CHECK(top.intensity() == doctest::Approx(e15).epsilon(1e-12));

  const auto wrap = decode({31, 4, 4});
  CHECK(encode(wrap) == DiscreteLighting{31, 4, 4});

  CHECK_THROWS_AS(decode({32, 0, 0}), DomainError);
  CHECK_THROWS_AS(decode({0, -1, 0}), DomainError);
}

TEST_CASE("every class survives decode then encode") {
  int mismatches = 0;
  for (int a = 0; a < kClasses; ++a)
    for (int e = 0; e < kClasses; ++e)
      for (int i = 0; i < kClasses; ++i) {
        const DiscreteLighting d{a, e, i};
        if (!(encode(decode(d)) == d)) ++mismatches;
      }
  CHECK(mismatches == 0);
}

TEST_CASE("quantization error is bounded and idempotent") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> e(0.2, 2.0);
  double worst = 0;
  for (int n = 0; n < 20000; ++n) {
    const LightSample l(testutil::random_unit(rng, true), e(rng));
    const auto d = encode(l);
    CHECK(d.azimuth_bin >= 0);
    CHECK(d.azimuth_bin < kClasses);
    CHECK(d.elevation_bin < kClasses);
    CHECK(d.intensity_bin < kClasses);
    const auto back = decode(d);
    worst = std::max(worst, angular_error(back.direction(), l.direction()));
    CHECK(encode(back) == d);
  }
  CHECK(worst <= 8.0);
}

TEST_CASE("intensity outside the range") {
  CHECK_THROWS_AS(encode(light(0, 0, 1, 2.5)), DomainError);
  const auto r = encode(light(0, 0, 1, 2.5), BinConfig{}, EncodeMode::inference);
  CHECK(r.intensity_clamped);
  CHECK(r.bins.intensity_bin == 31);
  const auto low = encode(light(0, 0, 1, 0.1), BinConfig{}, EncodeMode::inference);
  CHECK(low.intensity_clamped);
  CHECK(low.bins.intensity_bin == 0);
  CHECK_FALSE(encode(light(0, 0, 1, 1.0), BinConfig{}, EncodeMode::inference).intensity_clamped);
}

TEST_CASE("argmax takes the first maximum") {
  LightLogits l;
  l.azimuth[3] = 2.0;
  l.azimuth[7] = 2.0;
  l.elevation[31] = 1.0;
  l.intensity[0] = -1.0;
  const auto d = argmax(l);
  CHECK(d.azimuth_bin == 3);
  CHECK(d.elevation_bin == 31);
  CHECK(d.intensity_bin == 1);
}
