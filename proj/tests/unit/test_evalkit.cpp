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
#include <numbers>
#include <random>

#include "doctest.h"
#include "psfuse/core/image_io.hpp"
#include "psfuse/evalkit.hpp"
#include "psfuse/model.hpp"
#include "psfuse/synthgen.hpp"
#include "test_util.hpp"

using namespace psfuse;
using namespace psfuse::evalkit;

bool angular_error_ok(const LightSample& a, const LightSample& b);

namespace {

std::vector<ImageLightSet> objects(int count, int lights, std::uint64_t seed, int res = 16) {
  synthgen::GenConfig g;
  g.seed = seed;
  g.num_surfaces = count;
  g.lights_per_surface = lights;
  g.resolution = res;
  std::vector<ImageLightSet> out;
  for (int i = 0; i < count; ++i) out.push_back(synthgen::generate_sample(g, i).set);
  return out;
}

netcore::NetWeights weights(std::uint64_t seed) {
  netcore::NetMetadata meta;
  meta.seed = seed;
  return netcore::init_weights(meta);
}

// Independent oracle: per-pixel arccos of the clamped dot product.
double naive_mae(const NormalMap& pred, const NormalMap& gt, const Mask& mask) {
  double sum = 0;
  long n = 0;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.inside(r, c)) continue;
      const auto a = pred.raw(r, c), b = gt.raw(r, c);
      double dot = 0, na = 0, nb = 0;
      for (int k = 0; k < 3; ++k) {
        dot += double(a[k]) * b[k];
        na += double(a[k]) * a[k];
        nb += double(b[k]) * b[k];
      }
      const double cosv = std::max(-1.0, std::min(1.0, dot / std::sqrt(na * nb)));
      sum += std::acos(cosv) * 180.0 / std::numbers::pi;
      ++n;
    }
  return sum / n;
}

void check_same(const ImageLightSet& a, const ImageLightSet& b, double tol) {
  REQUIRE(a.size() == b.size());
  CHECK(a.mask == b.mask);
  for (int i = 0; i < a.size(); ++i) {
    double worst = 0;
    for (std::size_t k = 0; k < a.images[i].values().size(); ++k)
      worst = std::max(worst, double(std::abs(a.images[i].values()[k] - b.images[i].values()[k])));
    CHECK(worst <= tol);
    CHECK(angular_error_ok((*a.lights)[i], (*b.lights)[i]));
  }
  REQUIRE(a.gt_normals.has_value() == b.gt_normals.has_value());
  if (a.gt_normals) {
    CHECK(std::equal(a.gt_normals->data().begin(), a.gt_normals->data().end(), b.gt_normals->data().begin()));
  }
}

}  // namespace

bool angular_error_ok(const LightSample& a, const LightSample& b) {
  return a.direction().dot(b.direction()) > 1.0 - 1e-10 && std::abs(a.intensity() - b.intensity()) < 1e-5;
}

TEST_CASE("adapter layout round trip") {
  const auto dir = testutil::scratch_dir("evalkit_rt");
  const auto set = objects(1, 5, 1).front();
  save_benchmark_object(dir / "psim", set, ImageFormat::psim);
  const auto back = load_object(dir / "psim");
  check_same(set, back, 0.0);
  CHECK(back.size() == static_cast<int>(io::read_table(dir / "psim" / "light_directions.txt").size()));

  auto dim = set;
  for (auto& img : dim.images)
    for (auto& v : img.values()) v = std::min(v, 1.0f);
  save_benchmark_object(dir / "png", dim, ImageFormat::png16);
  check_same(dim, load_object(dir / "png"), 1.0 / 65535.0);

  // filenames.txt decides M
  {
    std::ofstream os(dir / "psim" / "filenames.txt");
    os << "img_000.psim\nimg_001.psim\nimg_002.psim\n";
  }
  CHECK_THROWS(load_object(dir / "psim"));  // 3 names vs 5 light rows

  fs::remove(dir / "png" / "mask.png");
  try {
    load_object(dir / "png");
    FAIL("expected an ingestion error");
  } catch (const IngestionError& e) {
    CHECK(std::string(e.what()).find("mask") != std::string::npos);
  }
}

TEST_CASE("canonical and adapter loaders agree") {
  const auto dir = testutil::scratch_dir("evalkit_layouts");
  synthgen::GenConfig g;
  g.seed = 3;
  g.num_surfaces = 3;
  g.lights_per_surface = 4;
  g.resolution = 16;
  const auto man = synthgen::generate_dataset(g, dir / "canon");
  const auto loaded = load_dataset(dir / "canon");
  REQUIRE(loaded.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const auto expect = synthgen::generate_sample(g, i).set;
    check_same(expect, loaded[i], 0.0);
    save_benchmark_object(dir / "bench" / loaded[i].name, loaded[i]);
  }
  const auto bench = load_dataset(dir / "bench");
  REQUIRE(bench.size() == 3);
  for (int i = 0; i < 3; ++i) check_same(loaded[i], bench[i], 0.0);
  CHECK(load_dataset(dir / "canon" / man.samples[0].id).size() == 1);
  CHECK_THROWS_AS(load_dataset(dir / "nothing"), IngestionError);
}

TEST_CASE("evaluate matches a naive per-pixel loop") {
  auto objs = objects(3, 6, 5);
  const auto w = weights(2);
  const auto report = evaluate(w, objs);
  CHECK(report.mode == "gt_lighting");
  CHECK(report.checkpoint_hash == w.content_hash());
  double sum = 0;
  for (const auto& o : objs) {
    const auto pred = netcore::normal_net_forward(o, *o.lights, w, netcore::NetVariant::full);
    const double oracle = naive_mae(pred, *o.gt_normals, o.mask);
    CHECK(std::abs(report.mae.at(o.name) - oracle) < 1e-9);
    CHECK(report.images_used.at(o.name) == 6);
    sum += report.mae.at(o.name);
  }
  CHECK(std::abs(report.average_mae - sum / 3) < 1e-9);

  // permuted images
  auto perm = objs;
  for (auto& o : perm) {
    std::reverse(o.images.begin(), o.images.end());
    std::reverse(o.lights->begin(), o.lights->end());
  }
  const auto again = evaluate(w, perm);
  for (const auto& [name, v] : report.mae) CHECK(std::abs(again.mae.at(name) - v) < 1e-5);

  const auto back = EvalReport::from_json(report.to_json());
  CHECK(back.mae == report.mae);
  CHECK(back.average_mae == report.average_mae);

  auto sub = evaluate(w, objs, {EvalMode::gt_lighting, 4});
  CHECK(sub.images_used.begin()->second == 4);

  auto uncal = evaluate(w, objs, {EvalMode::uncalibrated, 0});
  CHECK(uncal.lighting.size() == 3);
  CHECK(std::isfinite(uncal.average_mae));

  objs[1].gt_normals.reset();
  CHECK_THROWS_AS(evaluate(w, objs), DomainError);
}

TEST_CASE("ground truth as prediction scores zero") {
  const auto objs = objects(2, 4, 6);
  std::vector<ObjectPrediction> preds;
  for (const auto& o : objs) preds.push_back({*o.gt_normals, *o.lights, o.size()});
  const auto r = report_from_predictions(objs, preds, EvalMode::uncalibrated);
  for (const auto& [name, v] : r.mae) CHECK(v == 0.0);
  CHECK(r.average_mae == 0.0);
  for (const auto& [name, e] : r.lighting) {
    CHECK(e.direction_deg == 0.0);
    CHECK(e.intensity_rel == doctest::Approx(0.0));
  }
}

TEST_CASE("lighting error") {
  std::vector<LightSample> truth{LightSample(UnitVec3::normalize(0, 0, 1), 1.0),
                                 LightSample(UnitVec3::normalize(1, 0, 1), 2.0)};
  std::vector<LightSample> scaled{LightSample(UnitVec3::normalize(0, 0, 1), 3.0),
                                  LightSample(UnitVec3::normalize(1, 0, 1), 6.0)};
  const auto e = lighting_error(scaled, truth);
  CHECK(e.direction_deg == doctest::Approx(0.0));
  CHECK(e.intensity_rel == doctest::Approx(0.0));
  std::vector<LightSample> off{LightSample(UnitVec3::normalize(1, 0, 1), 1.0),
                               LightSample(UnitVec3::normalize(1, 0, 1), 2.0)};
  CHECK(lighting_error(off, truth).direction_deg == doctest::Approx(22.5));
}

TEST_CASE("report table order") {
  EvalReport r;
  r.mode = "uncalibrated";
  r.mae = {{"zeta", 3.0}, {"Harvest", 2.0}, {"Ball", 1.0}, {"alpha", 4.0}};
  r.average_mae = 2.5;
  const auto t = r.to_table();
  const auto ball = t.find("Ball"), harvest = t.find("Harvest"), alpha = t.find("alpha"), zeta = t.find("zeta"),
             avg = t.find("Average");
  CHECK(ball < harvest);
  CHECK(harvest < alpha);
  CHECK(alpha < zeta);
  CHECK(zeta < avg);
  CHECK(avg != std::string::npos);
}

TEST_CASE("visualizations") {
  const auto dir = testutil::scratch_dir("evalkit_vis");
  std::vector<std::uint8_t> inside(16 * 12, 1);
  inside[5] = 0;
  const Mask mask(16, 12, inside);
  std::vector<float> xyz(3 * 16 * 12, 0.0f);
  for (std::size_t p = 0; p < 16 * 12; ++p) xyz[3 * p + 2] = 1.0f;
  const auto n = NormalMap::from_vectors(mask, xyz);
  const auto rgb = normal_to_rgb(n);
  CHECK(rgb[0] == 128);
  CHECK(rgb[1] == 128);
  CHECK(rgb[2] == 255);
  CHECK(rgb[15] == 0);

  const auto files = emit_error_map(n, n, mask, dir / "err.png");
  const auto img = io::read_png16(files.error_map);
  CHECK(img.height == 16);
  CHECK(img.width == 12);
  CHECK(img.channels == 3);
  const auto low = error_color(0.0);
  for (std::size_t p = 0; p < 16 * 12; ++p) {
    if (p == 5) continue;
    for (int c = 0; c < 3; ++c) CHECK(img.data[3 * p + c] == low[c] * 257);
  }
  CHECK(fs::exists(dir / "err_normals.png"));

  auto set = objects(1, 4, 7).front();
  std::vector<std::uint8_t> disk(256, 0);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) disk[r * 16 + c] = (r - 8) * (r - 8) + (c - 8) * (c - 8) < 40;
  set.mask = Mask(16, 16, disk);
  const auto w = weights(3);
  const auto map = emit_mean_feature_map(w, set, dir / "feat.png", 5.0);
  REQUIRE(map.size() == 256);
  for (std::size_t p = 0; p < 256; ++p) {
    CHECK(map[p] >= 0.0f);
    CHECK(map[p] <= 5.0f + 1e-5f);
    if (!disk[p]) CHECK(map[p] == 0.0f);
  }
  CHECK(io::read_png16(dir / "feat.png").channels == 1);
  CHECK(fs::exists(dir / "feat.psim"));

  // zero weights make every feature constant
  auto flat = w;
  for (auto& p : flat.params)
    if (p.name.find("bias") == std::string::npos) std::fill(p.value.begin(), p.value.end(), 0.0f);
  const auto constant = mean_feature_map(flat, set);
  for (std::size_t p = 0; p < 256; ++p) CHECK(constant[p] == constant[8 * 16 + 8] * float(disk[p]));
}
