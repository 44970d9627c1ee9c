// Command-line front end for the phantom-based contrastive domain-adaptation
// segmentation pipeline.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "segcl/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised contrastive domain adaptation on synthetic OCT-like phantoms"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint_path, baseline_path, split = "target";
  bool resume = false, plots = false, with_lambda = false, with_fractions = false;

  auto add_config = [&config_path](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
  };

  CLI::App* generate = app.add_subcommand("generate", "generate phantom dataset + split manifest");
  add_config(generate);

  CLI::App* train = app.add_subcommand("train", "train the configured regime");
  add_config(train);
  train->add_flag("--resume", resume, "resume from the last epoch state if present");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a test split");
  add_config(eval);
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--baseline", baseline_path, "baseline checkpoint enabling rel columns");
  eval->add_option("--split", split, "test split: source|target");

  CLI::App* reproduce = app.add_subcommand("reproduce", "run the full method grid");
  add_config(reproduce);
  reproduce->add_flag("--ablate-lambda", with_lambda, "also run the loss-weight ablation");
  reproduce->add_flag("--ablate-fraction", with_fractions, "also run the labeled-data ablation");
  reproduce->add_flag("--plots", plots, "emit SVG plots for ablation curves");

  CLI::App* ablate_lambda = app.add_subcommand("ablate-lambda", "loss-weight ablation");
  add_config(ablate_lambda);
  ablate_lambda->add_flag("--plots", plots, "emit SVG plot");

  CLI::App* ablate_fraction = app.add_subcommand("ablate-fraction", "labeled-data ablation");
  add_config(ablate_fraction);
  ablate_fraction->add_flag("--plots", plots, "emit SVG plot");

  CLI11_PARSE(app, argc, argv);

  try {
    segcl::cli::ExperimentConfig cfg = segcl::cli::load_config(config_path);
    if (generate->parsed()) segcl::cli::cmd_generate(cfg);
    if (train->parsed()) segcl::cli::cmd_train(cfg, resume);
    if (eval->parsed()) segcl::cli::cmd_eval(cfg, checkpoint_path, baseline_path, split);
    if (reproduce->parsed()) segcl::cli::cmd_reproduce(cfg, with_lambda, with_fractions, plots);
    if (ablate_lambda->parsed()) segcl::cli::cmd_ablate_lambda(cfg, plots);
    if (ablate_fraction->parsed()) segcl::cli::cmd_ablate_fraction(cfg, plots);
  } catch (const segcl::Error& e) {
    std::fprintf(stderr, "error category=%s: %s\n", e.category().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error category=unexpected: %s\n", e.what());
    return 1;
  }
  return 0;
}
