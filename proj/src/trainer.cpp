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

#include "psfuse/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "psfuse/core/errors.hpp"
#include "psfuse/core/hash.hpp"
#include "psfuse/evalkit.hpp"
#include "psfuse/nn/adam.hpp"

namespace psfuse::trainer {

using json = nlohmann::json;
using netcore::NetVariant;
using netcore::NetWeights;
using nn::Tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> stage_prefixes(Stage s) {
  switch (s) {
    case Stage::lnet1:
      return {"lnet1."};
    case Stage::nnet:
      return {"nnet."};
    case Stage::lnet2:
      return {"lnet2."};
    case Stage::finetune:
      return {"lnet1.", "nnet.", "lnet2."};
    case Stage::normal_net:
      return {"normal_net."};
  }
  return {};
}

std::vector<std::string> split_history(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, '+'))
    if (!item.empty() && item != "init") out.push_back(item);
  return out;
}

std::string join_history(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : "+") + i;
  return out.empty() ? "init" : out;
}

bool needs_targets(Stage s) { return s == Stage::lnet1 || s == Stage::lnet2 || s == Stage::finetune; }

// Mean over sets of the per-set mean angular error (degrees) inside the mask.
double batch_mae(const Tensor<float>& pred, const Tensor<float>& gt, const Tensor<float>& mask) {
  double total = 0.0;
  int sets = 0;
  for (int s = 0; s < pred.n(); ++s) {
    double sum = 0.0;
    long count = 0;
    for (std::size_t p = 0; p < pred.plane_size(); ++p) {
      if (mask.plane(s, 0)[p] == 0.0f) continue;
      double a[3], b[3], na = 0.0, nb = 0.0, d = 0.0;
      for (int c = 0; c < 3; ++c) {
        a[c] = pred.plane(s, c)[p];
        b[c] = gt.plane(s, c)[p];
        na += a[c] * a[c];
        nb += b[c] * b[c];
        d += a[c] * b[c];
      }
      const double denom = std::sqrt(na * nb);
      const double cosv = denom > 0.0 ? std::clamp(d / denom, -1.0, 1.0) : -1.0;
      sum += std::acos(cosv) * 180.0 / M_PI;
      ++count;
    }
    if (count > 0) {
      total += sum / count;
      ++sets;
    }
  }
  return sets > 0 ? total / sets : 0.0;
}

struct StepOutput {
  losses::LossReport report;
  std::optional<double> mae;
};

// Forward, loss and (when train) backward for one batch.
StepOutput run_step(netcore::Model<float>& model, Stage stage, const Batch& b, bool train) {
  StepOutput out;
  const bool grads = train;
  Tensor<float> d1, dn, d2;
  auto& r = out.report;
  r.batch_images = b.sets * b.m;
  for (int s = 0; s < b.mask.n(); ++s)
    for (std::size_t p = 0; p < b.mask.plane_size(); ++p) r.pixels += b.mask.plane(s, 0)[p] != 0.0f;

  if (stage == Stage::normal_net) {
    auto& net = model.normal_net();
    const auto pred = net.forward(netcore::normal_net_input(b.images, b.lights), b.m);
    const double l = losses::normal_loss(pred, b.normals, b.mask, grads ? &dn : nullptr);
    if (grads) net.backward(dn, false);
    r.components = {{"normal", l}};
    r.total = l;
    out.mae = batch_mae(pred, b.normals, b.mask);
    return out;
  }

  auto& net = model.lighting();
  const auto depth = stage == Stage::lnet1  ? netcore::CascadeDepth::lnet1
                     : stage == Stage::nnet ? netcore::CascadeDepth::nnet
                                            : netcore::CascadeDepth::lnet2;
  const auto o = net.forward(b.images, b.mask, b.m, depth);
  switch (stage) {
    case Stage::lnet1: {
      const double l1 = losses::lighting_loss(o.logits1, b.targets, grads ? &d1 : nullptr);
      if (grads) net.backward(d1, {}, {}, false);
      r.components = {{"light1", l1}};
      r.total = l1;
      break;
    }
    case Stage::nnet: {
      const double ln = losses::normal_loss(o.rough_normals, b.normals, b.mask, grads ? &dn : nullptr);
      if (grads) net.backward({}, dn, {}, true);
      r.components = {{"normal", ln}};
      r.total = ln;
      out.mae = batch_mae(o.rough_normals, b.normals, b.mask);
      break;
    }
    case Stage::lnet2: {
      const double l2 = losses::lighting_loss(o.logits2, b.targets, grads ? &d2 : nullptr);
      if (grads) net.backward({}, {}, d2, false);
      r.components = {{"light2", l2}};
      r.total = l2;
      break;
    }
    case Stage::finetune: {
      const double l1 = losses::lighting_loss(o.logits1, b.targets, grads ? &d1 : nullptr);
      const double l2 = losses::lighting_loss(o.logits2, b.targets, grads ? &d2 : nullptr);
      const double ln = losses::normal_loss(o.rough_normals, b.normals, b.mask, grads ? &dn : nullptr);
      Tensor<float> ds;
      const double ls = losses::shading_loss(b.normals, losses::directions(b.lights), o.rough_normals,
                                             losses::directions(o.lights1), b.mask, b.m, grads ? &ds : nullptr);
      if (grads) {
        for (std::size_t i = 0; i < dn.size(); ++i) dn.data()[i] += ds.data()[i];
        net.backward(d1, dn, d2, true);
      }
      const auto rep = losses::finetune_loss(l1, l2, ln, ls);
      r.components = rep.components;
      r.total = rep.total;
      out.mae = batch_mae(o.rough_normals, b.normals, b.mask);
      break;
    }
    case Stage::normal_net:
      break;
  }
  return out;
}

void check_training_object(const ImageLightSet& s) {
  if (!s.lights) throw IngestionError("sample " + s.name + " has no lights");
  if (!s.gt_normals) throw IngestionError("sample " + s.name + " has no ground-truth normals");
}

}  // namespace

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::lnet1:
      return "lnet1";
    case Stage::nnet:
      return "nnet";
    case Stage::lnet2:
      return "lnet2";
    case Stage::finetune:
      return "finetune";
    case Stage::normal_net:
      return "normal_net";
  }
  return "normal_net";
}

Stage parse_stage(const std::string& name) {
  if (name == "lnet1") return Stage::lnet1;
  if (name == "nnet") return Stage::nnet;
  if (name == "lnet2") return Stage::lnet2;
  if (name == "finetune") return Stage::finetune;
  if (name == "normal_net" || name == "normal-net") return Stage::normal_net;
  throw ConfigError("unknown stage '" + name + "' (expected lnet1, nnet, lnet2, finetune or normal_net)");
}

std::vector<Stage> required_stages(Stage stage) {
  switch (stage) {
    case Stage::nnet:
      return {Stage::lnet1};
    case Stage::lnet2:
      return {Stage::lnet1, Stage::nnet};
    case Stage::finetune:
      return {Stage::lnet1, Stage::nnet, Stage::lnet2};
    default:
      return {};
  }
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (m_min < 1 || m_max < m_min) throw ConfigError("m_per_sample range must satisfy 1 <= lo <= hi");
  if (crop < 4 || crop % 4 != 0) throw ConfigError("crop must be a positive multiple of 4");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be at least 1");
  if (plateau_tolerance < 0.0) throw ConfigError("plateau_tolerance must be non-negative");
  if (max_lr_halvings < 0) throw ConfigError("max_lr_halvings must be non-negative");
}

std::string TrainConfig::hash(bool include_variant) const {
  Fnv1a h;
  h.update(stage_name(stage));
  if (include_variant) h.update(netcore::variant_name(variant));
  h.update(dataset.lexically_normal().string());
  h.update(val_dataset.lexically_normal().string());
  h.update(init.lexically_normal().string());
  for (long v : {static_cast<long>(batch_size), static_cast<long>(epochs), static_cast<long>(m_min),
                 static_cast<long>(m_max), static_cast<long>(crop), max_steps, static_cast<long>(early_stop),
                 static_cast<long>(plateau_patience), static_cast<long>(max_lr_halvings)}) {
    h.update_value(v);
  }
  h.update_value(seed);
  for (double v : {learning_rate, clip_norm, plateau_tolerance}) h.update_value(v);
  return h.hex();
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "stage = \"" << stage_name(stage) << "\"\n"
      << "variant = \"" << netcore::variant_name(variant) << "\"\n"
      << "dataset = \"" << dataset.string() << "\"\n"
      << "val_dataset = \"" << val_dataset.string() << "\"\n"
      << "checkpoint_dir = \"" << checkpoint_dir.string() << "\"\n"
      << "init = \"" << init.string() << "\"\n"
      << "batch_size = " << batch_size << "\n"
      << "epochs = " << epochs << "\n"
      << "learning_rate = " << learning_rate << "\n"
      << "m_per_sample = [" << m_min << ", " << m_max << "]\n"
      << "seed = " << seed << "\n"
      << "crop = " << crop << "\n"
      << "workers = " << workers << "\n"
      << "max_steps = " << max_steps << "\n"
      << "clip_norm = " << clip_norm << "\n"
      << "early_stop = " << (early_stop ? "true" : "false") << "\n"
      << "plateau_patience = " << plateau_patience << "\n"
      << "plateau_tolerance = " << plateau_tolerance << "\n"
      << "max_lr_halvings = " << max_lr_halvings << "\n";
  return out.str();
}

TrainConfig parse_config(const std::string& text, TrainConfig cfg) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    if (key == "stage") {
      cfg.stage = parse_stage(value);
    } else if (key == "variant") {
      cfg.variant = netcore::parse_variant(value);
    } else if (key == "dataset") {
      cfg.dataset = value;
    } else if (key == "val_dataset") {
      cfg.val_dataset = value;
    } else if (key == "checkpoint_dir") {
      cfg.checkpoint_dir = value;
    } else if (key == "init") {
      cfg.init = value;
    } else if (key == "batch_size") {
      cfg.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "epochs") {
      cfg.epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "learning_rate" || key == "lr") {
      cfg.learning_rate = parse_real(key, value);
    } else if (key == "m_per_sample") {
      if (!value.empty() && value.front() == '[') {
        const auto comma = value.find(',');
        if (value.back() != ']' || comma == std::string::npos) throw ConfigError("m_per_sample expects [lo, hi]");
        cfg.m_min = static_cast<int>(parse_int(key, trim(value.substr(1, comma - 1))));
        cfg.m_max = static_cast<int>(parse_int(key, trim(value.substr(comma + 1, value.size() - comma - 2))));
      } else {
        cfg.m_min = cfg.m_max = static_cast<int>(parse_int(key, value));
      }
    } else if (key == "m_min") {
      cfg.m_min = static_cast<int>(parse_int(key, value));
    } else if (key == "m_max") {
      cfg.m_max = static_cast<int>(parse_int(key, value));
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "crop") {
      cfg.crop = static_cast<int>(parse_int(key, value));
    } else if (key == "workers") {
      cfg.workers = static_cast<int>(parse_int(key, value));
    } else if (key == "max_steps") {
      cfg.max_steps = parse_int(key, value);
    } else if (key == "clip_norm") {
      cfg.clip_norm = parse_real(key, value);
    } else if (key == "early_stop") {
      cfg.early_stop = parse_bool(key, value);
    } else if (key == "plateau_patience") {
      cfg.plateau_patience = static_cast<int>(parse_int(key, value));
    } else if (key == "plateau_tolerance") {
      cfg.plateau_tolerance = parse_real(key, value);
    } else if (key == "max_lr_halvings") {
      cfg.max_lr_halvings = static_cast<int>(parse_int(key, value));
    } else {
      throw ConfigError("unknown config key '" + key + "' on line " + std::to_string(lineno));
    }
  }
  return cfg;
}

TrainConfig load_config(const fs::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

// ---------------------------------------------------------------------------

TrainData load_train_data(const TrainConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("no training dataset given");
  TrainData d;
  d.train = evalkit::load_dataset(cfg.dataset);
  for (const auto& s : d.train) check_training_object(s);
  if (!cfg.val_dataset.empty()) {
    d.val = evalkit::load_dataset(cfg.val_dataset);
    for (const auto& s : d.val) check_training_object(s);
  }
  return d;
}

std::vector<BatchPlan> plan_epoch(const std::vector<ImageLightSet>& data, const TrainConfig& cfg, int epoch) {
  if (data.empty()) throw ConfigError("training dataset is empty");
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<BatchPlan> plan;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    BatchPlan b;
    b.m = std::uniform_int_distribution<int>(cfg.m_min, cfg.m_max)(rng);
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    for (std::size_t k = start; k < end; ++k) {
      const auto& s = data[order[k]];
      if (s.size() < b.m) {
        throw ConfigError("sample " + s.name + " has " + std::to_string(s.size()) + " images, fewer than M=" +
                          std::to_string(b.m));
      }
      if (cfg.crop > s.height() || cfg.crop > s.width()) {
        throw ConfigError("crop " + std::to_string(cfg.crop) + " exceeds sample " + s.name + " size " +
                          std::to_string(s.height()) + "x" + std::to_string(s.width()));
      }
      BatchPlanItem item;
      item.sample = order[k];
      std::vector<int> idx(s.size());
      std::iota(idx.begin(), idx.end(), 0);
      for (int j = 0; j < b.m; ++j) {
        std::uniform_int_distribution<int> pick(j, s.size() - 1);
        std::swap(idx[j], idx[pick(rng)]);
      }
      item.images.assign(idx.begin(), idx.begin() + b.m);
      item.row = std::uniform_int_distribution<int>(0, s.height() - cfg.crop)(rng);
      item.col = std::uniform_int_distribution<int>(0, s.width() - cfg.crop)(rng);
      b.items.push_back(std::move(item));
    }
    plan.push_back(std::move(b));
  }
  return plan;
}

std::string plan_hash(const std::vector<BatchPlan>& plan) {
  Fnv1a h;
  for (const auto& b : plan) {
    h.update_value(b.m);
    for (const auto& it : b.items) {
      h.update_value(it.sample);
      h.update_value(it.row);
      h.update_value(it.col);
      h.update_span(std::span<const int>(it.images));
    }
  }
  return h.hex();
}

Batch materialize(const std::vector<ImageLightSet>& data, const BatchPlan& plan, int crop,
                  const lightcodec::BinConfig& bins, bool targets) {
  Batch b;
  b.sets = static_cast<int>(plan.items.size());
  b.m = plan.m;
  const int channels = data[plan.items.front().sample].channels();
  b.images = Tensor<float>(b.sets * b.m, channels, crop, crop);
  b.mask = Tensor<float>(b.sets, 1, crop, crop);
  b.normals = Tensor<float>(b.sets, 3, crop, crop);
  for (int s = 0; s < b.sets; ++s) {
    const auto& item = plan.items[s];
    const auto& obj = data[item.sample];
    if (obj.channels() != channels) throw ShapeError("samples in one dataset differ in channel count");
    b.sample_indices.push_back(item.sample);
    for (int r = 0; r < crop; ++r)
      for (int c = 0; c < crop; ++c) {
        const int rr = item.row + r, cc = item.col + c;
        if (!obj.mask.inside(rr, cc)) continue;
        b.mask.at(s, 0, r, c) = 1.0f;
        const auto n = obj.gt_normals->raw(rr, cc);
        for (int k = 0; k < 3; ++k) b.normals.at(s, k, r, c) = n[k];
      }
    for (int j = 0; j < b.m; ++j) {
      const int img = item.images[j];
      const auto& im = obj.images[img];
      const int n = s * b.m + j;
      for (int ch = 0; ch < channels; ++ch)
        for (int r = 0; r < crop; ++r)
          for (int c = 0; c < crop; ++c) {
            if (b.mask.at(s, 0, r, c) == 0.0f) continue;
            b.images.at(n, ch, r, c) = im.at(item.row + r, item.col + c, ch);
          }
      const auto& light = (*obj.lights)[img];
      b.lights.push_back(light);
      if (targets) b.targets.push_back(lightcodec::encode(light, bins));
    }
  }
  return b;
}

Batch materialize(const std::vector<ImageLightSet>& data, const BatchPlan& plan, int crop,
                  const lightcodec::BinConfig& bins) {
  return materialize(data, plan, crop, bins, true);
}

BatchStream::BatchStream(const std::vector<ImageLightSet>& data, const TrainConfig& cfg, int epoch,
                         const lightcodec::BinConfig& bins)
    : data_(data), plan_(plan_epoch(data, cfg, epoch)), crop_(cfg.crop), bins_(bins), prefetch_(cfg.workers > 1) {
  hash_ = plan_hash(plan_);
}

bool BatchStream::next(Batch& out) {
  if (cursor_ >= plan_.size()) return false;
  out = materialize(data_, plan_[cursor_], crop_, bins_);
  ++cursor_;
  return true;
}

// ---------------------------------------------------------------------------

namespace {

// Validation batches: the first m_max images of each sample, centered crop.
std::vector<BatchPlan> validation_plan(const std::vector<ImageLightSet>& data, const TrainConfig& cfg) {
  std::vector<BatchPlan> plan;
  for (std::size_t start = 0; start < data.size(); start += cfg.batch_size) {
    BatchPlan b;
    b.m = cfg.m_max;
    for (std::size_t k = start; k < std::min(data.size(), start + cfg.batch_size); ++k) {
      const auto& s = data[k];
      if (s.size() < b.m || cfg.crop > s.height() || cfg.crop > s.width()) {
        throw ConfigError("validation sample " + s.name + " is too small for the training configuration");
      }
      BatchPlanItem item;
      item.sample = static_cast<int>(k);
      for (int j = 0; j < b.m; ++j) item.images.push_back(j);
      item.row = (s.height() - cfg.crop) / 2;
      item.col = (s.width() - cfg.crop) / 2;
      b.items.push_back(std::move(item));
    }
    plan.push_back(std::move(b));
  }
  return plan;
}

struct ValidationResult {
  double loss = 0.0;
  std::optional<double> mae;
};

ValidationResult validate_model(netcore::Model<float>& model, const TrainConfig& cfg,
                                const std::vector<ImageLightSet>& val) {
  nn::NoGradGuard no_grad;
  ValidationResult v;
  double loss = 0.0, mae = 0.0;
  int sets = 0;
  bool have_mae = false;
  for (const auto& plan : validation_plan(val, cfg)) {
    const Batch b = materialize(val, plan, cfg.crop, model.meta().bins, needs_targets(cfg.stage));
    const auto out = run_step(model, cfg.stage, b, false);
    loss += out.report.total * b.sets;
    if (out.mae) {
      mae += *out.mae * b.sets;
      have_mae = true;
    }
    sets += b.sets;
  }
  v.loss = loss / sets;
  if (have_mae) v.mae = mae / sets;
  return v;
}

json step_json(const StepRecord& s) {
  return json{{"type", "step"},
              {"step", s.step},
              {"epoch", s.epoch},
              {"total", s.loss.total},
              {"components", s.loss.components},
              {"lr", s.lr},
              {"wall", s.wall_seconds}};
}

json epoch_json(const EpochRecord& e, double wall) {
  json j{{"type", "epoch"},     {"epoch", e.epoch}, {"train_loss", e.train_loss},
         {"lr", e.lr},          {"order_hash", e.order_hash}, {"wall", wall}};
  j["val_loss"] = e.val_loss ? json(*e.val_loss) : json(nullptr);
  j["val_mae"] = e.val_mae ? json(*e.val_mae) : json(nullptr);
  return j;
}

}  // namespace

TrainResult train_stage(const TrainConfig& cfg, const std::optional<NetWeights>& init, const TrainData& data) {
  cfg.validate();
  if (data.train.empty()) throw ConfigError("training dataset is empty");
  for (const auto& s : data.train) check_training_object(s);
  const auto t0 = Clock::now();

  netcore::NetMetadata meta;
  meta.variant = cfg.variant;
  meta.image_channels = data.train.front().channels();
  meta.seed = cfg.seed;
  std::vector<std::string> history;
  if (init) {
    if (init->meta.image_channels != meta.image_channels) {
      throw ConfigError("initial weights expect " + std::to_string(init->meta.image_channels) +
                        "-channel images, dataset has " + std::to_string(meta.image_channels));
    }
    meta.bins = init->meta.bins;
    meta.arch = init->meta.arch;
    meta.step = init->meta.step;
    history = split_history(init->meta.stage);
  }
  for (Stage req : required_stages(cfg.stage)) {
    if (std::find(history.begin(), history.end(), stage_name(req)) == history.end()) {
      throw ConfigError("stage " + stage_name(cfg.stage) + " needs weights trained through stage " +
                        stage_name(req) + " (pass them with --init)");
    }
  }
  NetWeights weights = netcore::init_weights(meta);
  if (init) weights.params.load_from(init->params);

  netcore::Model<float> model(meta);
  model.load(weights);
  nn::Adam adam(model.params(), nn::AdamConfig{static_cast<float>(cfg.learning_rate)}, stage_prefixes(cfg.stage));

  fs::create_directories(cfg.checkpoint_dir);
  const std::string stage = stage_name(cfg.stage);
  const fs::path last_ckpt = cfg.checkpoint_dir / (stage + "_last.psck");
  const fs::path final_ckpt = cfg.checkpoint_dir / (stage + ".psck");
  std::ofstream metrics(cfg.checkpoint_dir / (stage + "_metrics.ndjson"), std::ios::trunc);
  if (!metrics) throw IoError("cannot write metrics log in " + cfg.checkpoint_dir.string());

  TrainResult result;
  auto& log = result.log;
  log.stage = stage;
  log.config_hash = cfg.hash();
  log.seed = cfg.seed;
  metrics << json{{"type", "run"},
                  {"stage", stage},
                  {"variant", netcore::variant_name(cfg.variant)},
                  {"config_hash", log.config_hash},
                  {"seed", cfg.seed},
                  {"samples", data.train.size()}}
                 .dump()
          << "\n";

  if (history.empty() || history.back() != stage) history.push_back(stage);
  auto snapshot = [&](const fs::path& path, long steps) {
    model.store(weights);
    weights.meta.step = meta.step + static_cast<std::uint64_t>(steps);
    weights.meta.stage = join_history(history);
    save_checkpoint(path, weights);
  };

  const bool targets = needs_targets(cfg.stage);
  double best = INFINITY;
  int bad_epochs = 0, halvings = 0;
  long step = 0;
  log.stop_reason = "epoch limit";
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto plan = plan_epoch(data.train, cfg, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.order_hash = plan_hash(plan);
    rec.lr = adam.lr();
    double epoch_loss = 0.0;
    int epoch_sets = 0;

    std::future<Batch> pending;
    auto load = [&](std::size_t i) { return materialize(data.train, plan[i], cfg.crop, meta.bins, targets); };
    if (cfg.workers > 1 && !plan.empty()) pending = std::async(std::launch::async, load, 0);
    bool capped = false;
    for (std::size_t i = 0; i < plan.size(); ++i) {
      Batch batch = cfg.workers > 1 ? pending.get() : load(i);
      if (cfg.workers > 1 && i + 1 < plan.size()) pending = std::async(std::launch::async, load, i + 1);

      model.params().zero_grad();
      const auto out = run_step(model, cfg.stage, batch, true);
      if (!std::isfinite(out.report.total)) {
        throw TrainingDivergedError("non-finite loss at step " + std::to_string(step) + " of stage " + stage +
                                    "; last good checkpoint: " +
                                    (fs::exists(last_ckpt) ? last_ckpt.string() : std::string("none")));
      }
      const double gnorm = model.params().grad_norm();
      if (!std::isfinite(gnorm)) {
        throw TrainingDivergedError("non-finite gradient at step " + std::to_string(step) + " of stage " + stage +
                                    "; last good checkpoint: " +
                                    (fs::exists(last_ckpt) ? last_ckpt.string() : std::string("none")));
      }
      if (gnorm > cfg.clip_norm) model.params().scale_grad(static_cast<float>(cfg.clip_norm / gnorm));
      adam.step();

      StepRecord sr{step, epoch, out.report, adam.lr(), seconds_since(t0)};
      metrics << step_json(sr).dump() << "\n";
      log.steps.push_back(std::move(sr));
      epoch_loss += out.report.total * batch.sets;
      epoch_sets += batch.sets;
      ++step;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        capped = true;
        break;
      }
    }
    if (cfg.workers > 1 && pending.valid()) pending.wait();
    rec.train_loss = epoch_loss / std::max(1, epoch_sets);
    double monitored = rec.train_loss;
    if (!data.val.empty()) {
      const auto v = validate_model(model, cfg, data.val);
      rec.val_loss = v.loss;
      rec.val_mae = v.mae;
      monitored = v.loss;
    }
    if (!model.params().all_finite()) {
      throw TrainingDivergedError("non-finite weights after epoch " + std::to_string(epoch) + " of stage " + stage);
    }
    snapshot(last_ckpt, step);
    metrics << epoch_json(rec, seconds_since(t0)).dump() << "\n";
    metrics.flush();
    log.epochs.push_back(rec);
    if (capped) {
      log.stop_reason = "step limit";
      break;
    }
    if (cfg.early_stop) {
      if (monitored < best * (1.0 - cfg.plateau_tolerance)) {
        best = monitored;
        bad_epochs = 0;
      } else if (++bad_epochs >= cfg.plateau_patience) {
        if (halvings >= cfg.max_lr_halvings) {
          log.stop_reason = "converged";
          break;
        }
        adam.set_lr(adam.lr() * 0.5f);
        ++halvings;
        bad_epochs = 0;
      }
    }
  }
  snapshot(final_ckpt, step);
  log.wall_seconds = seconds_since(t0);
  metrics << json{{"type", "done"}, {"steps", step}, {"reason", log.stop_reason}, {"wall", log.wall_seconds},
                  {"checkpoint", final_ckpt.string()}, {"fingerprint", weights.content_hash()}}
                 .dump()
          << "\n";
  result.weights = std::move(weights);
  result.checkpoint = final_ckpt;
  return result;
}

TrainResult train_stage(const TrainConfig& cfg, const std::optional<NetWeights>& init) {
  cfg.validate();
  const TrainData data = load_train_data(cfg);
  std::optional<NetWeights> start = init;
  if (!start && !cfg.init.empty()) start = netcore::load_checkpoint(cfg.init);
  return train_stage(cfg, start, data);
}

// ---------------------------------------------------------------------------

double AblationTable::mean_mae(NetVariant v) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : runs)
    if (r.variant == v) {
      sum += r.mae;
      ++n;
    }
  return n ? sum / n : NAN;
}

std::string AblationTable::to_text() const {
  std::ostringstream out;
  char buf[64];
  out << "variant   ";
  for (auto s : seeds) {
    std::snprintf(buf, sizeof(buf), " %10s", ("seed " + std::to_string(s)).c_str());
    out << buf;
  }
  out << "       mean\n";
  for (NetVariant v : {NetVariant::full, NetVariant::no_pool, NetVariant::no_fusion}) {
    std::snprintf(buf, sizeof(buf), "%-10s", netcore::variant_name(v).c_str());
    out << buf;
    for (auto s : seeds) {
      for (const auto& r : runs)
        if (r.variant == v && r.seed == s) {
          std::snprintf(buf, sizeof(buf), " %10.3f", r.mae);
          out << buf;
        }
    }
    std::snprintf(buf, sizeof(buf), " %10.3f\n", mean_mae(v));
    out << buf;
  }
  return out.str();
}

std::string AblationTable::to_json() const {
  json runs_j = json::array();
  for (const auto& r : runs) {
    runs_j.push_back(json{{"variant", netcore::variant_name(r.variant)},
                          {"seed", r.seed},
                          {"mae", r.mae},
                          {"order_hashes", r.order_hashes},
                          {"config_hash", r.config_hash},
                          {"wall", r.wall_seconds}});
  }
  json means = json::object();
  for (NetVariant v : {NetVariant::full, NetVariant::no_pool, NetVariant::no_fusion}) {
    means[netcore::variant_name(v)] = mean_mae(v);
  }
  return json{{"seeds", seeds}, {"runs", runs_j}, {"mean_mae", means}}.dump(2);
}

AblationTable run_ablation_suite(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                                 const TrainData& data) {
  if (seeds.size() < 2) throw ConfigError("the ablation suite needs at least two seeds");
  if (data.val.empty()) throw ConfigError("the ablation suite needs a validation dataset");
  AblationTable table;
  table.seeds = seeds;
  for (auto seed : seeds) {
    for (NetVariant v : {NetVariant::full, NetVariant::no_pool, NetVariant::no_fusion}) {
      TrainConfig cfg = base;
      cfg.stage = Stage::normal_net;
      cfg.variant = v;
      cfg.seed = seed;
      cfg.init.clear();
      cfg.checkpoint_dir = base.checkpoint_dir / (netcore::variant_name(v) + "_seed" + std::to_string(seed));
      const auto res = train_stage(cfg, std::nullopt, data);
      AblationRun run;
      run.variant = v;
      run.seed = seed;
      run.mae = evalkit::evaluate(res.weights, data.val, {evalkit::EvalMode::gt_lighting, 0}).average_mae;
      for (const auto& e : res.log.epochs) run.order_hashes.push_back(e.order_hash);
      run.config_hash = cfg.hash(false);
      run.wall_seconds = res.log.wall_seconds;
      table.runs.push_back(std::move(run));
    }
  }
  return table;
}

AblationTable run_ablation_suite(const TrainConfig& base, const std::vector<std::uint64_t>& seeds) {
  return run_ablation_suite(base, seeds, load_train_data(base));
}

}  // namespace psfuse::trainer
