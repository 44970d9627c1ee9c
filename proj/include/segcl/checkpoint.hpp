#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "segcl/trainer.hpp"

namespace segcl::ckpt {

/// Checkpoint file: one-line JSON manifest (magic SEGCLCKPT1, model config,
/// step, metric history, tensor directory) + '\n' + f32le blobs in directory
/// order. Round-trip is bit-exact.
void save_checkpoint(const std::string& path, const model::ModelConfig& model_cfg, bool has_head,
                     bool has_predictor, int epoch, std::int64_t step,
                     const std::vector<train::EpochRecord>& history,
                     const train::NamedTensors& params);

struct LoadedCheckpoint {
  model::ModelConfig model;
  bool has_head = false;
  bool has_predictor = false;
  int epoch = 0;
  std::int64_t step = 0;
  std::vector<train::EpochRecord> history;
  train::NamedTensors params;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Epoch-boundary trainer state for --resume: parameters, Adam moments,
/// best-so-far checkpoint, and metric history. Per-step randomness derives
/// from (seed, step) alone, so no RNG state needs to persist.
struct TrainState {
  std::string config_fingerprint;
  int epochs_completed = 0;
  std::int64_t global_step = 0;
  train::NamedTensors params;
  train::NamedTensors adam_m;
  train::NamedTensors adam_v;
  train::NamedTensors best_params;
  int best_epoch = 0;
  std::vector<double> best_val;
  double best_mean = -1.0;
  std::vector<train::EpochRecord> history;
};

void save_train_state(const std::string& path, const TrainState& state);
TrainState load_train_state(const std::string& path);

/// One JSON object per line: {epoch, split, class, metric, value}.
void write_metrics_log(const std::string& path, const std::vector<train::EpochRecord>& history,
                       const std::vector<std::string>& class_names);

nlohmann::json model_config_to_json(const model::ModelConfig& cfg);
model::ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace segcl::ckpt
