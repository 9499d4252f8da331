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

#include "psfuse/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "psfuse/classic.hpp"
#include "psfuse/core/errors.hpp"
#include "psfuse/core/image_io.hpp"
#include "psfuse/core/metrics.hpp"
#include "psfuse/evalkit.hpp"
#include "psfuse/model.hpp"
#include "psfuse/synthgen.hpp"
#include "psfuse/trainer.hpp"

namespace psfuse::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

fs::path with_extension(fs::path p, const std::string& ext) { return p.replace_extension(ext); }

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string v = trim(line.substr(eq + 1));
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
    out[trim(line.substr(0, eq))] = v;
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

synthgen::GenConfig gen_config_from_file(const fs::path& path) {
  synthgen::GenConfig cfg;
  for (const auto& [k, v] : read_key_values(path)) {
    const double x = to_real(k, v == "true" ? "1" : (v == "false" ? "0" : v));
    if (k == "seed") cfg.seed = static_cast<std::uint64_t>(x);
    else if (k == "surfaces") cfg.num_surfaces = static_cast<int>(x);
    else if (k == "lights") cfg.lights_per_surface = static_cast<int>(x);
    else if (k == "resolution") cfg.resolution = static_cast<int>(x);
    else if (k == "albedo_min") cfg.albedo_range.lo = x;
    else if (k == "albedo_max") cfg.albedo_range.hi = x;
    else if (k == "specular_min") cfg.specular_range.lo = x;
    else if (k == "specular_max") cfg.specular_range.hi = x;
    else if (k == "shininess_min") cfg.shininess_range.lo = x;
    else if (k == "shininess_max") cfg.shininess_range.hi = x;
    else if (k == "intensity_min") cfg.intensity_range.lo = x;
    else if (k == "intensity_max") cfg.intensity_range.hi = x;
    else if (k == "elevation_min") cfg.elevation_range.lo = x;
    else if (k == "elevation_max") cfg.elevation_range.hi = x;
    else if (k == "lambertian_fraction") cfg.lambertian_fraction = x;
    else if (k == "noise_sigma") cfg.noise_sigma = x;
    else if (k == "png16") cfg.export_png16 = x != 0.0;
    else if (k == "png16_scale") cfg.png16_scale = x;
    else throw ConfigError("unknown config key '" + k + "' in " + path.string());
  }
  return cfg;
}

template <class T>
void apply_flag(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

std::pair<int, int> parse_m(const std::string& s) {
  const auto dash = s.find_first_of("-:");
  try {
    if (dash == std::string::npos) {
      const int m = std::stoi(s);
      return {m, m};
    }
    return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
  } catch (const std::exception&) {
    throw ConfigError("--m expects N or LO-HI, got '" + s + "'");
  }
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ConfigError("--seeds expects a comma-separated list of integers, got '" + s + "'");
    }
  }
  return out;
}

std::string lights_json_text(const std::vector<LightSample>& lights) {
  json arr = json::array();
  for (const auto& l : lights) {
    arr.push_back(json{{"direction", l.direction().array()}, {"intensity", l.intensity()}});
  }
  return json{{"lights", arr}}.dump(2) + "\n";
}

// Options shared by the training subcommands; unset values keep config-file
// or default values.
struct TrainFlags {
  std::optional<std::string> config, stage, variant, dataset, val_dataset, checkpoint_dir, init, m;
  std::optional<int> batch_size, epochs, crop, workers;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<long> max_steps;
  bool no_early_stop = false;

  void attach(CLI::App* app, bool with_stage) {
    app->add_option("--config", config, "Config file (key = value lines)");
    if (with_stage) {
      app->add_option("--stage", stage, "lnet1, nnet, lnet2, finetune or normal_net");
      app->add_option("--variant", variant, "full, no_pool or no_fusion");
      app->add_option("--init", init, "Checkpoint holding earlier stages");
    }
    app->add_option("--dataset", dataset, "Training dataset directory");
    app->add_option("--val-dataset", val_dataset, "Validation dataset directory");
    app->add_option("--checkpoint-dir", checkpoint_dir, "Output directory for checkpoints and metrics");
    app->add_option("--batch-size", batch_size, "Surfaces per batch");
    app->add_option("--epochs", epochs, "Epoch cap");
    app->add_option("--lr", lr, "Initial learning rate");
    app->add_option("--m", m, "Images per surface: N or LO-HI");
    app->add_option("--seed", seed, "Seed for initialization and data order");
    app->add_option("--crop", crop, "Square crop size (multiple of 4)");
    app->add_option("--workers", workers, "Data loading workers (1 is deterministic)");
    app->add_option("--max-steps", max_steps, "Stop after this many optimizer steps (0: no cap)");
    app->add_flag("--no-early-stop", no_early_stop, "Disable the plateau stopping rule");
  }

  trainer::TrainConfig resolve() const {
    trainer::TrainConfig cfg;
    if (config) cfg = trainer::load_config(*config);
    if (stage) cfg.stage = trainer::parse_stage(*stage);
    if (variant) cfg.variant = netcore::parse_variant(*variant);
    if (dataset) cfg.dataset = *dataset;
    if (val_dataset) cfg.val_dataset = *val_dataset;
    if (checkpoint_dir) cfg.checkpoint_dir = *checkpoint_dir;
    if (init) cfg.init = *init;
    if (m) std::tie(cfg.m_min, cfg.m_max) = parse_m(*m);
    apply_flag(batch_size, cfg.batch_size);
    apply_flag(epochs, cfg.epochs);
    apply_flag(crop, cfg.crop);
    apply_flag(workers, cfg.workers);
    apply_flag(lr, cfg.learning_rate);
    apply_flag(seed, cfg.seed);
    apply_flag(max_steps, cfg.max_steps);
    if (no_early_stop) cfg.early_stop = false;
    cfg.validate();
    return cfg;
  }
};

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Photometric stereo toolkit: data generation, training, evaluation and inference", "psfuse"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);
  std::function<void()> action;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Render a synthetic training dataset");
  std::optional<std::string> gen_config;
  std::string gen_out;
  std::optional<std::uint64_t> gen_seed;
  std::optional<int> gen_surfaces, gen_lights, gen_resolution, gen_workers;
  std::optional<double> gen_lambert, gen_albedo_min, gen_albedo_max, gen_spec_max, gen_noise;
  bool gen_png = false;
  gen->add_option("--config", gen_config, "Config file (key = value lines)");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Dataset seed");
  gen->add_option("--surfaces", gen_surfaces, "Number of surfaces");
  gen->add_option("--lights", gen_lights, "Lights (images) per surface");
  gen->add_option("--resolution", gen_resolution, "Surface side in pixels");
  gen->add_option("--lambertian-fraction", gen_lambert, "Share of purely Lambertian surfaces");
  gen->add_option("--albedo-min", gen_albedo_min, "Lower albedo bound");
  gen->add_option("--albedo-max", gen_albedo_max, "Upper albedo bound");
  gen->add_option("--specular-max", gen_spec_max, "Upper specular strength bound");
  gen->add_option("--noise", gen_noise, "Gaussian noise sigma");
  gen->add_option("--workers", gen_workers, "Rendering threads");
  gen->add_flag("--png16", gen_png, "Also write 16-bit PNG copies of the images");
  gen->callback([&] {
    action = [&] {
      synthgen::GenConfig cfg = gen_config ? gen_config_from_file(*gen_config) : synthgen::GenConfig{};
      apply_flag(gen_seed, cfg.seed);
      apply_flag(gen_surfaces, cfg.num_surfaces);
      apply_flag(gen_lights, cfg.lights_per_surface);
      apply_flag(gen_resolution, cfg.resolution);
      apply_flag(gen_lambert, cfg.lambertian_fraction);
      apply_flag(gen_albedo_min, cfg.albedo_range.lo);
      apply_flag(gen_albedo_max, cfg.albedo_range.hi);
      apply_flag(gen_spec_max, cfg.specular_range.hi);
      apply_flag(gen_noise, cfg.noise_sigma);
      if (gen_png) cfg.export_png16 = true;
      try {
        cfg.validate();
      } catch (const DomainError& e) {
        throw ConfigError(e.what());
      }
      const auto manifest = synthgen::generate_dataset(cfg, gen_out, gen_workers.value_or(1));
      out << "wrote " << manifest.samples.size() << " samples to " << gen_out << " (config " << manifest.config_hash
          << ")\n";
    };
  });

  // train
  auto* train = app.add_subcommand("train", "Train one stage");
  TrainFlags train_flags;
  train_flags.attach(train, true);
  train->callback([&] {
    action = [&] {
      const auto cfg = train_flags.resolve();
      const auto res = trainer::train_stage(cfg);
      for (const auto& e : res.log.epochs) {
        out << "epoch " << e.epoch << " train_loss " << e.train_loss;
        if (e.val_loss) out << " val_loss " << *e.val_loss;
        if (e.val_mae) out << " val_mae " << *e.val_mae;
        out << "\n";
      }
      write_json(cfg.checkpoint_dir / (res.log.stage + "_summary.json"),
                 json{{"stage", res.log.stage},
                      {"checkpoint", res.checkpoint.string()},
                      {"steps", res.log.steps.size()},
                      {"final_loss", res.log.final_loss()},
                      {"stop_reason", res.log.stop_reason},
                      {"config_hash", res.log.config_hash},
                      {"fingerprint", res.weights.content_hash()},
                      {"wall_seconds", res.log.wall_seconds}});
      io::write_text(cfg.checkpoint_dir / (res.log.stage + "_config.toml"), cfg.to_text());
      out << "checkpoint " << res.checkpoint.string() << " (" << res.log.stop_reason << ")\n";
    };
  });

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and compare the full, no_pool and no_fusion variants");
  TrainFlags ablate_flags;
  ablate_flags.attach(ablate, false);
  std::string ablate_seeds = "0,1,2";
  std::optional<std::string> ablate_out;
  ablate->add_option("--seeds", ablate_seeds, "Comma-separated seeds (at least two)");
  ablate->add_option("--out", ablate_out, "Table path (a .json twin is written next to it)");
  ablate->callback([&] {
    action = [&] {
      auto cfg = ablate_flags.resolve();
      const auto table = trainer::run_ablation_suite(cfg, parse_seeds(ablate_seeds));
      const fs::path path = ablate_out ? fs::path(*ablate_out) : cfg.checkpoint_dir / "ablation.txt";
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      io::write_text(path, table.to_text());
      io::write_text(with_extension(path, ".json"), table.to_json() + "\n");
      out << table.to_text();
    };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on objects with ground-truth normals");
  std::string eval_ckpt, eval_data, eval_mode = "uncalibrated";
  std::optional<std::string> eval_out, eval_maps;
  std::optional<std::uint64_t> eval_seed;
  int eval_max_images = 0;
  double eval_gamma = 1.0;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Object directory or dataset root")->required();
  eval->add_option("--mode", eval_mode, "uncalibrated or gt_lighting");
  eval->add_option("--max-images", eval_max_images, "Use at most this many images per object (0: all)");
  eval->add_option("--gamma", eval_gamma, "Linearization exponent for PNG images");
  eval->add_option("--out", eval_out, "Report path (.txt; a .json twin is written next to it)");
  eval->add_option("--error-maps", eval_maps, "Directory for per-object error maps");
  eval->add_option("--seed", eval_seed, "Accepted for uniformity; evaluation is deterministic");
  eval->callback([&] {
    action = [&] {
      const auto mode = evalkit::parse_eval_mode(eval_mode);
      const auto weights = netcore::load_checkpoint(eval_ckpt);
      const auto objects = evalkit::load_dataset(eval_data, {eval_gamma});
      const auto report = evalkit::evaluate(weights, objects, {mode, eval_max_images});
      out << report.to_table();
      if (eval_out) {
        fs::path p(*eval_out);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        io::write_text(p, report.to_table());
        io::write_text(with_extension(p, ".json"), report.to_json() + "\n");
      }
      if (eval_maps) {
        netcore::Predictor predictor(weights);
        for (const auto& obj : objects) {
          const auto pred = evalkit::predict(predictor, evalkit::subsample_images(obj, eval_max_images), mode);
          evalkit::emit_error_map(pred.normals, *obj.gt_normals, obj.mask, fs::path(*eval_maps) / (obj.name + "_error.png"));
        }
      }
    };
  });

  // infer
  auto* infer = app.add_subcommand("infer", "Estimate lights and normals from images and a mask");
  std::string infer_ckpt, infer_input, infer_out;
  std::optional<std::uint64_t> infer_seed;
  int infer_max_images = 0;
  double infer_gamma = 1.0;
  infer->add_option("--checkpoint", infer_ckpt, "Checkpoint file")->required();
  infer->add_option("--input", infer_input, "Directory with images and mask.png")->required();
  infer->add_option("--out", infer_out, "Output directory")->required();
  infer->add_option("--max-images", infer_max_images, "Use at most this many images (0: all)");
  infer->add_option("--gamma", infer_gamma, "Linearization exponent for PNG images");
  infer->add_option("--seed", infer_seed, "Accepted for uniformity; inference is deterministic");
  infer->callback([&] {
    action = [&] {
      const auto weights = netcore::load_checkpoint(infer_ckpt);
      const auto set = evalkit::subsample_images(evalkit::load_image_folder(infer_input, {infer_gamma}), infer_max_images);
      netcore::Predictor predictor(weights);
      const auto est = predictor.lights(set);
      const auto normals = predictor.normals(set, est.lights2);
      const fs::path dir(infer_out);
      fs::create_directories(dir);
      io::write_normal_map(dir / "normals.psnm", normals);
      io::write_png8(dir / "normals.png", normals.height(), normals.width(), 3, evalkit::normal_to_rgb(normals));
      io::write_lights(dir / "lights.txt", est.lights2);
      io::write_text(dir / "lights.json", lights_json_text(est.lights2));
      write_json(dir / "infer.json", json{{"checkpoint", weights.content_hash()},
                                          {"images", set.size()},
                                          {"normals", "normals.psnm"},
                                          {"lights", "lights.txt"}});
      out << "wrote normals and " << est.lights2.size() << " lights to " << dir.string() << "\n";
    };
  });

  // solve-classic
  auto* solve = app.add_subcommand("solve-classic", "Least-squares Lambertian solve with known lights");
  std::string solve_data, solve_out;
  std::optional<std::uint64_t> solve_seed;
  bool solve_shadow = false;
  double solve_gamma = 1.0;
  solve->add_option("--data", solve_data, "Object directory (canonical or benchmark layout)")->required();
  solve->add_option("--out", solve_out, "Output directory")->required();
  solve->add_option("--gamma", solve_gamma, "Linearization exponent for PNG images");
  solve->add_flag("--shadow-rejection", solve_shadow, "Discard the darkest quarter of observations per pixel");
  solve->add_option("--seed", solve_seed, "Accepted for uniformity; the solve is deterministic");
  solve->callback([&] {
    action = [&] {
      const auto set = evalkit::load_object(solve_data, {solve_gamma});
      const auto sol = classic::solve_lambertian(set, {solve_shadow, 1e-6});
      const fs::path dir(solve_out);
      fs::create_directories(dir);
      io::write_normal_map(dir / "normals.psnm", sol.normals);
      io::write_png8(dir / "normals.png", sol.normals.height(), sol.normals.width(), 3,
                     evalkit::normal_to_rgb(sol.normals));
      io::FloatImage albedo{set.height(), set.width(), sol.channels, {}};
      for (double a : sol.albedo) albedo.values.push_back(static_cast<float>(a));
      io::write_float_image(dir / "albedo.psim", albedo);
      long unrecovered = 0;
      for (auto u : sol.unrecovered) unrecovered += u;
      json summary{{"object", set.name}, {"images", set.size()}, {"unrecovered_pixels", unrecovered}};
      if (set.gt_normals) {
        const double mae = mean_angular_error(sol.normals, *set.gt_normals, sol.normals.mask());
        summary["mae"] = mae;
        out << set.name << " MAE " << mae << "\n";
      }
      write_json(dir / "solve.json", summary);
      out << "wrote " << (dir / "normals.psnm").string() << "\n";
    };
  });

  // render-viz
  auto* viz = app.add_subcommand("render-viz", "Render normal maps, error maps and fused-feature maps");
  std::optional<std::string> viz_normals, viz_gt, viz_mask, viz_ckpt, viz_data;
  std::string viz_out;
  std::optional<std::uint64_t> viz_seed;
  double viz_max_deg = 45.0, viz_multiplier = 1.0;
  viz->add_option("--normals", viz_normals, "Predicted normal map (.psnm)");
  viz->add_option("--gt", viz_gt, "Ground-truth normal map (.psnm) for an error map");
  viz->add_option("--mask", viz_mask, "Mask PNG (defaults to the prediction's mask)");
  viz->add_option("--checkpoint", viz_ckpt, "Checkpoint for a fused-feature map");
  viz->add_option("--data", viz_data, "Object directory for a fused-feature map");
  viz->add_option("--out", viz_out, "Output PNG path")->required();
  viz->add_option("--max-degrees", viz_max_deg, "Error color scale upper bound");
  viz->add_option("--multiplier", viz_multiplier, "Brightness multiplier for feature maps");
  viz->add_option("--seed", viz_seed, "Accepted for uniformity; rendering is deterministic");
  viz->callback([&] {
    action = [&] {
      if (viz_ckpt || viz_data) {
        if (!viz_ckpt || !viz_data) throw UsageError("a feature map needs both --checkpoint and --data");
        const auto weights = netcore::load_checkpoint(*viz_ckpt);
        const auto set = evalkit::load_object(*viz_data);
        evalkit::emit_mean_feature_map(weights, set, viz_out, viz_multiplier);
        out << "wrote " << viz_out << "\n";
        return;
      }
      if (!viz_normals) throw UsageError("render-viz needs --normals or --checkpoint with --data");
      NormalMap pred = io::read_normal_map(*viz_normals);
      const fs::path p(viz_out);
      if (p.has_parent_path()) fs::create_directories(p.parent_path());
      if (viz_gt) {
        const Mask mask = viz_mask ? io::read_mask_png(*viz_mask) : pred.mask();
        const NormalMap gt = io::read_normal_map(*viz_gt, mask);
        const auto files = evalkit::emit_error_map(pred, gt, mask, p, viz_max_deg);
        out << "wrote " << files.error_map.string() << " and " << files.normal_map.string() << "\n";
      } else {
        io::write_png8(p, pred.height(), pred.width(), 3, evalkit::normal_to_rgb(pred));
        out << "wrote " << p.string() << "\n";
      }
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "psfuse: " << e.what() << "\n";
    err << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 2;
  }

  try {
    if (action) action();
    return 0;
  } catch (const UsageError& e) {
    err << "psfuse: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "psfuse: invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "psfuse: error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "psfuse: error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace psfuse::cli
