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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "psfuse/core/types.hpp"
#include "psfuse/losses.hpp"
#include "psfuse/model.hpp"

namespace psfuse::trainer {

namespace fs = std::filesystem;

enum class Stage { lnet1, nnet, lnet2, finetune, normal_net };

std::string stage_name(Stage s);
Stage parse_stage(const std::string& name);

struct TrainConfig {
  Stage stage = Stage::normal_net;
  netcore::NetVariant variant = netcore::NetVariant::full;
  fs::path dataset;
  fs::path val_dataset;  // optional; empty means plateau checks use the training loss
  fs::path checkpoint_dir = "checkpoints";
  fs::path init;         // optional checkpoint to start from
  int batch_size = 16;
  int epochs = 20;
  double learning_rate = 1e-3;
  int m_min = 8;
  int m_max = 8;
  std::uint64_t seed = 0;
  int crop = 32;
  int workers = 1;
  long max_steps = 0;            // 0: no cap
  double clip_norm = 5.0;
  bool early_stop = true;
  int plateau_patience = 3;
  double plateau_tolerance = 0.01;
  int max_lr_halvings = 2;

  void validate() const;
  /// Hash over every field that affects the result (not paths of outputs or
  /// worker count). include_variant=false gives the ablation-comparable hash.
  std::string hash(bool include_variant = true) const;
  std::string to_text() const;
};

/// Parses flat key = value lines ('#' comments, optional quotes, m_per_sample
/// as an integer or [lo, hi]) on top of base.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const fs::path& path, TrainConfig base = {});

// ---------------------------------------------------------------------------

struct TrainData {
  std::vector<ImageLightSet> train;
  std::vector<ImageLightSet> val;
};

TrainData load_train_data(const TrainConfig& cfg);

/// One materialized training batch of `sets` surfaces with m images each.
struct Batch {
  int sets = 0;
  int m = 0;
  nn::Tensor<float> images;  // [sets * m, C, crop, crop], masked
  nn::Tensor<float> mask;    // [sets, 1, crop, crop]
  nn::Tensor<float> normals;  // [sets, 3, crop, crop], zero outside the mask
  std::vector<LightSample> lights;
  std::vector<lightcodec::DiscreteLighting> targets;
  std::vector<int> sample_indices;
};

struct BatchPlanItem {
  int sample = 0;
  std::vector<int> images;
  int row = 0;
  int col = 0;
};

struct BatchPlan {
  int m = 0;
  std::vector<BatchPlanItem> items;
};

/// Deterministic plan for one epoch: shuffled samples, M per batch uniform in
/// [m_min, m_max], random image subsets and crop offsets.
std::vector<BatchPlan> plan_epoch(const std::vector<ImageLightSet>& data, const TrainConfig& cfg, int epoch);
std::string plan_hash(const std::vector<BatchPlan>& plan);
Batch materialize(const std::vector<ImageLightSet>& data, const BatchPlan& plan, int crop,
                  const lightcodec::BinConfig& bins);

/// Batches of one epoch, prefetched on a background thread when workers > 1.
class BatchStream {
 public:
  BatchStream(const std::vector<ImageLightSet>& data, const TrainConfig& cfg, int epoch,
              const lightcodec::BinConfig& bins);
  bool next(Batch& out);
  const std::string& order_hash() const { return hash_; }
  std::size_t size() const { return plan_.size(); }

 private:
  const std::vector<ImageLightSet>& data_;
  std::vector<BatchPlan> plan_;
  int crop_;
  lightcodec::BinConfig bins_;
  bool prefetch_;
  std::size_t cursor_ = 0;
  std::string hash_;
};

// ---------------------------------------------------------------------------

struct StepRecord {
  long step = 0;
  int epoch = 0;
  losses::LossReport loss;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_mae;
  double lr = 0.0;
  std::string order_hash;
};

struct TrainLog {
  std::string stage;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
  std::string stop_reason;

  double final_loss() const { return steps.empty() ? 0.0 : steps.back().loss.total; }
};

struct TrainResult {
  netcore::NetWeights weights;
  TrainLog log;
  fs::path checkpoint;  // final checkpoint written for this stage
};

/// Runs one stage. Checkpoints are written every epoch to
/// <checkpoint_dir>/<stage>_last.psck and finally <stage>.psck; metrics go to
/// <stage>_metrics.ndjson. A non-finite loss aborts with
/// TrainingDivergedError and leaves the last epoch checkpoint in place.
TrainResult train_stage(const TrainConfig& cfg, const std::optional<netcore::NetWeights>& init,
                        const TrainData& data);
TrainResult train_stage(const TrainConfig& cfg, const std::optional<netcore::NetWeights>& init = std::nullopt);

/// Stages whose weights must already be trained before `stage` can run.
std::vector<Stage> required_stages(Stage stage);

// ---------------------------------------------------------------------------

struct AblationRun {
  netcore::NetVariant variant;
  std::uint64_t seed = 0;
  double mae = 0.0;
  std::vector<std::string> order_hashes;
  std::string config_hash;  // variant excluded
  double wall_seconds = 0.0;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRun> runs;

  double mean_mae(netcore::NetVariant v) const;
  std::string to_text() const;
  std::string to_json() const;
};

/// Trains full, no_pool and no_fusion normal networks for every seed with
/// identical data order and evaluates each on the validation split.
AblationTable run_ablation_suite(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                                 const TrainData& data);
AblationTable run_ablation_suite(const TrainConfig& base, const std::vector<std::uint64_t>& seeds);

}  // namespace psfuse::trainer
