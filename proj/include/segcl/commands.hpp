#pragma once

#include <string>

#include "segcl/config.hpp"
#include "segcl/trainer.hpp"

namespace segcl::cli {

/// Generates the phantom corpus and both split manifests (default and
/// upper-bound) under output_dir.
void cmd_generate(const ExperimentConfig& cfg);

/// Loads the generated dataset with the split variant a regime needs.
data::Dataset load_dataset(const ExperimentConfig& cfg, bool upper_bound_split);

void cmd_train(const ExperimentConfig& cfg, bool resume);

void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
              const std::string& baseline_path, const std::string& split);

void cmd_reproduce(const ExperimentConfig& cfg, bool with_lambda, bool with_fractions,
                   bool plots);

void cmd_ablate_lambda(const ExperimentConfig& cfg, bool plots);

void cmd_ablate_fraction(const ExperimentConfig& cfg, bool plots);

}  // namespace segcl::cli
