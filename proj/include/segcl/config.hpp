#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "segcl/phantom.hpp"
#include "segcl/trainer.hpp"

namespace segcl::cli {

struct DataConfig {
  int num_classes = 4;
  int num_source_volumes = 40;
  int num_target_volumes = 60;
  phantom::GeometryParams geometry;
  phantom::DomainProfile source_profile;
  phantom::DomainProfile target_profile;
  phantom::StratifyConfig stratify;
};

struct EvalConfig {
  double threshold = 0.5;
};

struct AblationConfig {
  std::vector<double> lambdas{0.1, 1.0, 10.0, 20.0, 100.0, 1000.0};
  std::vector<double> fractions{0.05, 0.1, 0.2, 0.5, 1.0};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DataConfig data;
  model::ModelConfig model;
  train::TrainConfig train;
  EvalConfig eval;
  AblationConfig ablations;
};

/// Strict load: unknown keys and missing required fields are rejected with
/// the offending field path. SEGCL_OUTPUT_DIR overrides output_dir.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Canonical config identity minus train.epochs; resumed runs may extend the
/// epoch budget but nothing else.
std::string config_fingerprint(const ExperimentConfig& cfg);

}  // namespace segcl::cli
