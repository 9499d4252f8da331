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

// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 only
// when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "psfuse/classic.hpp"
#include "psfuse/core/metrics.hpp"
#include "psfuse/evalkit.hpp"
#include "psfuse/lightcodec.hpp"
#include "psfuse/losses.hpp"
#include "psfuse/model.hpp"
#include "psfuse/netcore.hpp"
#include "psfuse/synthgen.hpp"
#include "psfuse/trainer.hpp"
#include "test_util.hpp"

using namespace psfuse;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Options {
  fs::path work_dir = fs::temp_directory_path() / "psfuse_acceptance";
  std::string cli;
  std::set<int> only;
  int toy_epochs = 20;
  int ablation_epochs = 5;
  int batch = 8;
  std::vector<std::uint64_t> ablation_seeds{0, 1, 2};
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------
// Toy-scale data shared by criteria 6 and 7.

synthgen::GenConfig toy_train_config() {
  synthgen::GenConfig g;
  g.seed = 0;
  g.num_surfaces = 512;
  g.lights_per_surface = 16;
  g.resolution = 32;
  return g;
}

synthgen::GenConfig lambertian_val_config() {
  auto g = toy_train_config();
  g.seed = 1000;
  g.num_surfaces = 64;
  g.lambertian_fraction = 1.0;
  return g;
}

synthgen::GenConfig dark_val_config() {
  auto g = toy_train_config();
  g.seed = 2000;
  g.num_surfaces = 64;
  g.lambertian_fraction = 0.0;
  g.albedo_range = {0.02, 0.1};
  return g;
}

std::vector<ImageLightSet> render_sets(const synthgen::GenConfig& g) {
  std::vector<ImageLightSet> out;
  out.reserve(g.num_surfaces);
  for (int i = 0; i < g.num_surfaces; ++i) out.push_back(synthgen::generate_sample(g, i).set);
  return out;
}

trainer::TrainConfig toy_train(const fs::path& dir, int batch) {
  trainer::TrainConfig cfg;
  cfg.checkpoint_dir = dir;
  cfg.m_min = cfg.m_max = 8;
  cfg.crop = 32;
  cfg.batch_size = batch;
  cfg.early_stop = false;
  return cfg;
}

double gt_lighting_mae(const netcore::NetWeights& w, const std::vector<ImageLightSet>& val) {
  return evalkit::evaluate(w, val, {evalkit::EvalMode::gt_lighting, 8}).average_mae;
}

// ---------------------------------------------------------------------------

Outcome permutation_invariance(const Options&) {
  std::mt19937_64 rng(101);
  double worst = 0;
  int checked = 0;
  for (int m : {2, 4, 8, 16}) {
    netcore::NetMetadata meta;
    meta.seed = 500 + m;
    const auto w = netcore::init_weights(meta);
    const auto set = testutil::random_set(m, 16, 16, 3, rng);
    const auto base = netcore::normal_net_forward(set, *set.lights, w, netcore::NetVariant::full);
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    for (int k = 0; k < 20; ++k) {
      std::shuffle(perm.begin(), perm.end(), rng);
      ImageLightSet p = set;
      for (int i = 0; i < m; ++i) {
        p.images[i] = set.images[perm[i]];
        (*p.lights)[i] = (*set.lights)[perm[i]];
      }
      const auto out = netcore::normal_net_forward(p, *p.lights, w, netcore::NetVariant::full);
      for (std::size_t i = 0; i < out.data().size(); ++i)
        worst = std::max(worst, double(std::abs(out.data()[i] - base.data()[i])));
      ++checked;
    }
  }
  return {worst <= 1e-5, std::to_string(checked) + " permutations, max component diff " + fmt(worst)};
}

Outcome gradient_correctness(const Options&) {
  struct Check {
    const char* name;
    std::function<double(std::uint64_t)> run;
  };
  const std::vector<Check> checks{
      {"fusion_module", gradcheck::fusion_module},
      {"extractor_block", gradcheck::extractor_block},
      {"aggregate_and_regress", gradcheck::aggregate_and_regress},
      {"lighting_loss", gradcheck::lighting_loss},
      {"normal_loss", gradcheck::normal_loss},
      {"shading_loss", gradcheck::shading_loss},
      {"finetune_loss", gradcheck::finetune_loss},
  };
  bool pass = true;
  std::string detail;
  for (const auto& c : checks) {
    double worst = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) worst = std::max(worst, c.run(seed));
    pass = pass && worst < gradcheck::kTolerance;
    detail += std::string(detail.empty() ? "" : ", ") + c.name + " " + fmt(worst, 2);
  }
  return {pass, "worst relative error: " + detail};
}

Outcome classic_round_trip(const Options&) {
  synthgen::GenConfig g;
  g.seed = 303;
  g.num_surfaces = 100;
  g.lights_per_surface = 12;
  g.lambertian_fraction = 1.0;
  double worst_mae = 0, worst_albedo = 0;
  for (int i = 0; i < g.num_surfaces; ++i) {
    auto s = synthgen::generate_sample(g, i);
    // keep pixels lit in every image so the objects are shadow-free
    std::vector<std::uint8_t> lit(s.set.mask.data().begin(), s.set.mask.data().end());
    for (std::size_t p = 0; p < lit.size(); ++p)
      for (const auto& img : s.set.images) lit[p] &= img.values()[3 * p] > 0.0f;
    s.set.mask = Mask(g.resolution, g.resolution, lit);
    const auto sol = classic::solve_lambertian(s.set);
    worst_mae = std::max(worst_mae, mean_angular_error(sol.normals, s.surface.normals, s.set.mask));
    for (std::size_t p = 0; p < lit.size(); ++p) {
      if (!lit[p]) continue;
      for (int c = 0; c < 3; ++c)
        worst_albedo = std::max(worst_albedo, std::abs(sol.albedo[3 * p + c] - s.record.brdf.albedo[c]));
    }
  }
  return {worst_mae < 0.1 && worst_albedo < 1e-4,
          "worst MAE " + fmt(worst_mae) + " deg, worst albedo error " + fmt(worst_albedo)};
}

Outcome codec_exhaustive(const Options&) {
  using namespace lightcodec;
  int mismatches = 0;
  for (int a = 0; a < kClasses; ++a)
    for (int e = 0; e < kClasses; ++e)
      for (int i = 0; i < kClasses; ++i) {
        const DiscreteLighting d{a, e, i};
        mismatches += !(encode(decode(d)) == d);
      }
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> intensity(0.2, 2.0);
  double worst = 0;
  for (int n = 0; n < 100000; ++n) {
    const LightSample l(testutil::random_unit(rng, true), intensity(rng));
    worst = std::max(worst, angular_error(decode(encode(l)).direction(), l.direction()));
  }
  return {mismatches == 0 && worst <= 8.0,
          std::to_string(mismatches) + " class mismatches, worst direction error " + fmt(worst) + " deg"};
}

NormalMap constant_map(int h, int w, double x, double y, double z) {
  std::vector<float> xyz;
  for (int p = 0; p < h * w; ++p) xyz.insert(xyz.end(), {float(x), float(y), float(z)});
  return NormalMap::from_vectors(Mask::full(h, w), xyz);
}

Outcome loss_values(const Options&) {
  const std::vector<lightcodec::LightLogits> uniform(5);
  const std::vector<lightcodec::DiscreteLighting> targets(5, {4, 9, 20});
  const double light = losses::lighting_loss(uniform, targets);
  const double light_err = std::abs(light - 3 * std::log(32.0));

  const auto z = constant_map(8, 8, 0, 0, 1);
  const double same = losses::normal_loss(z, z, z.mask());
  const double ortho = losses::normal_loss(constant_map(8, 8, 1, 0, 0), z, z.mask());
  const double anti = losses::normal_loss(constant_map(8, 8, 0, 0, -1), z, z.mask());

  // one pixel, n = n~ = (0,0,1), l = (0,0,1), l~ = (1,0,0)
  nn::Tensor<double> n(1, 3, 1, 1);
  n.at(0, 2, 0, 0) = 1.0;
  const nn::Tensor<double> mask(1, 1, 1, 1, 1.0);
  const double shading = losses::shading_loss<double>(n, {{0, 0, 1}}, n, {{1, 0, 0}}, mask, 1, nullptr);

  const bool pass = light_err < 1e-6 && same == 0.0 && ortho == 1.0 && anti == 2.0 && std::abs(shading - 1) < 1e-9;
  return {pass, "lighting " + fmt(light, 10) + ", normal " + fmt(same) + "/" + fmt(ortho) + "/" + fmt(anti) +
                    ", shading " + fmt(shading, 12)};
}

Outcome toy_training(const Options& opt, double& runtime) {
  const auto t0 = Clock::now();
  trainer::TrainData data{render_sets(toy_train_config()), render_sets(lambertian_val_config())};
  auto cfg = toy_train(opt.work_dir / "toy", opt.batch);
  cfg.epochs = opt.toy_epochs;
  netcore::NetMetadata meta;
  meta.seed = cfg.seed;
  const double untrained = gt_lighting_mae(netcore::init_weights(meta), data.val);
  const auto res = trainer::train_stage(cfg, std::nullopt, data);
  const double trained = gt_lighting_mae(res.weights, data.val);
  runtime = seconds_since(t0);
  const bool pass = trained < 15.0 && untrained > 45.0 && runtime <= 3600.0;
  return {pass, std::to_string(res.log.epochs.size()) + " epochs, held-out MAE " + fmt(trained) +
                    " deg, untrained " + fmt(untrained) + " deg"};
}

Outcome ablation(const Options& opt, double toy_runtime) {
  const auto t0 = Clock::now();
  trainer::TrainData data{render_sets(toy_train_config()), render_sets(dark_val_config())};
  auto cfg = toy_train(opt.work_dir / "ablation", opt.batch);
  cfg.epochs = opt.ablation_epochs;
  const auto table = trainer::run_ablation_suite(cfg, opt.ablation_seeds, data);
  fs::create_directories(cfg.checkpoint_dir);
  std::ofstream(cfg.checkpoint_dir / "ablation.txt") << table.to_text();
  const double runtime = seconds_since(t0);
  const double full = table.mean_mae(netcore::NetVariant::full);
  const double no_pool = table.mean_mae(netcore::NetVariant::no_pool);
  const double no_fusion = table.mean_mae(netcore::NetVariant::no_fusion);
  const double budget = 3.0 * toy_runtime;
  const bool pass = opt.ablation_seeds.size() >= 3 && full < no_pool && full < no_fusion && runtime <= budget;
  return {pass, std::to_string(opt.ablation_seeds.size()) + " seeds, mean MAE full " + fmt(full) + ", no_pool " +
                    fmt(no_pool) + ", no_fusion " + fmt(no_fusion) + " deg; " + fmt(runtime, 5) + " s of " +
                    fmt(budget, 5) + " s budget"};
}

// Naive per-pixel arccos loop, independent of the metrics module.
double naive_mae(const NormalMap& pred, const NormalMap& gt, const Mask& mask) {
  double sum = 0;
  long count = 0;
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
      sum += std::acos(std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0)) * 180.0 / std::numbers::pi;
      ++count;
    }
  return sum / double(count);
}

Outcome metric_oracle(const Options&) {
  synthgen::GenConfig g;
  g.seed = 808;
  g.num_surfaces = 6;
  g.lights_per_surface = 6;
  g.resolution = 24;
  const auto objects = render_sets(g);
  netcore::NetMetadata meta;
  meta.seed = 8;
  const auto w = netcore::init_weights(meta);
  const auto report = evalkit::evaluate(w, objects, {evalkit::EvalMode::gt_lighting, 0});
  double worst = 0;
  for (const auto& o : objects) {
    const auto pred = netcore::normal_net_forward(o, *o.lights, w, netcore::NetVariant::full);
    worst = std::max(worst, std::abs(report.mae.at(o.name) - naive_mae(pred, *o.gt_normals, o.mask)));
  }
  return {worst <= 1e-9, std::to_string(objects.size()) + " objects, max difference " + fmt(worst, 3)};
}

Outcome determinism(const Options& opt) {
  synthgen::GenConfig g;
  g.seed = 909;
  g.num_surfaces = 24;
  g.lights_per_surface = 10;
  g.resolution = 16;
  trainer::TrainData data{render_sets(g), {}};
  trainer::TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.epochs = 2;
  cfg.m_min = 3;
  cfg.m_max = 8;
  cfg.crop = 16;
  cfg.seed = 99;
  cfg.workers = 1;
  std::vector<double> final_loss;
  std::vector<std::string> hashes;
  for (const char* run : {"a", "b"}) {
    cfg.checkpoint_dir = opt.work_dir / "determinism" / run;
    const auto res = trainer::train_stage(cfg, std::nullopt, data);
    final_loss.push_back(res.log.final_loss());
    hashes.push_back(netcore::load_checkpoint(res.checkpoint).content_hash());
  }
  const double diff = std::abs(final_loss[0] - final_loss[1]);
  return {diff <= 1e-6 && hashes[0] == hashes[1],
          "final loss difference " + fmt(diff) + ", fingerprints " + hashes[0] + " / " + hashes[1]};
}

Outcome cli_smoke(const Options& opt) {
  if (opt.cli.empty()) return {false, "no --cli binary given"};
  const auto t0 = Clock::now();
  const fs::path dir = opt.work_dir / "cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string data = (dir / "data").string(), ck = (dir / "ck").string();
  std::string failed;
  auto step = [&](const std::string& name, const std::string& args) {
    if (!failed.empty()) return;
    const std::string cmd = opt.cli + " " + args + " >> " + (dir / "log.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (status != 0 || !WIFEXITED(status)) failed = name + " exited with status " + std::to_string(status);
  };
  step("gen-data", "gen-data --seed 10 --out " + data + " --surfaces 16 --lights 8 --resolution 32");
  std::string init;
  for (const char* stage : {"lnet1", "nnet", "lnet2", "finetune", "normal_net"}) {
    step(stage, std::string("train --stage ") + stage + " --dataset " + data + " --checkpoint-dir " + ck +
                    " --epochs 1 --batch-size 4 --m 4-8 --seed 10" + init);
    init = " --init " + ck + "/" + stage + ".psck";
  }
  step("eval", "eval --checkpoint " + ck + "/normal_net.psck --data " + data + " --out " +
                   (dir / "report.txt").string() + " --seed 10");
  step("infer", "infer --checkpoint " + ck + "/normal_net.psck --input " + data + "/s00000 --out " +
                    (dir / "infer").string() + " --seed 10");
  const double runtime = seconds_since(t0);
  if (!failed.empty()) return {false, failed + " (log in " + (dir / "log.txt").string() + ")"};
  const bool outputs = fs::exists(dir / "report.json") && fs::exists(dir / "infer" / "normals.psnm");
  return {outputs && runtime < 600.0, "all steps exited 0 in " + fmt(runtime) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  std::vector<int> only;
  std::string seeds;
  CLI::App app{"Acceptance criteria runner", "psfuse_acceptance"};
  app.add_option("--work-dir", opt.work_dir, "Scratch directory");
  app.add_option("--cli", opt.cli, "Path to the psfuse binary");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--toy-epochs", opt.toy_epochs, "Epochs for the toy training run");
  app.add_option("--ablation-epochs", opt.ablation_epochs, "Epochs per ablation run");
  app.add_option("--batch", opt.batch, "Batch size of the toy training and ablation runs");
  app.add_option("--ablation-seeds", seeds, "Comma-separated ablation seeds");
  CLI11_PARSE(app, argc, argv);
  opt.only.insert(only.begin(), only.end());
  if (!seeds.empty()) {
    opt.ablation_seeds.clear();
    std::stringstream ss(seeds);
    for (std::string s; std::getline(ss, s, ',');) opt.ablation_seeds.push_back(std::stoull(s));
  }
  fs::create_directories(opt.work_dir);

  double toy_runtime = 3600.0;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"permutation invariance", [&] { return permutation_invariance(opt); }},
      {"gradient correctness", [&] { return gradient_correctness(opt); }},
      {"classic round trip", [&] { return classic_round_trip(opt); }},
      {"lighting codec", [&] { return codec_exhaustive(opt); }},
      {"loss values", [&] { return loss_values(opt); }},
      {"toy training", [&] { return toy_training(opt, toy_runtime); }},
      {"ablation direction", [&] { return ablation(opt, toy_runtime); }},
      {"MAE oracle", [&] { return metric_oracle(opt); }},
      {"determinism", [&] { return determinism(opt); }},
      {"CLI smoke", [&] { return cli_smoke(opt); }},
  };
  const std::vector<double> limits{60, 300, 120, 60, 60, 3600, 0, 60, 600, 600};

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!opt.only.empty() && !opt.only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double runtime = seconds_since(t0);
    if (limits[i] > 0 && runtime > limits[i]) {
      o.pass = false;
      o.detail += "; over the " + fmt(limits[i]) + " s limit";
    }
    failures += !o.pass;
    std::cout << "criterion " << std::setw(2) << id << " " << (o.pass ? "PASS" : "FAIL") << "  "
              << criteria[i].first << ": " << o.detail << " (" << std::fixed << std::setprecision(1) << runtime
              << " s)" << std::defaultfloat << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
