#include "segcl/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "segcl/checkpoint.hpp"
#include "segcl/json_util.hpp"
#include "segcl/report.hpp"

namespace fs = std::filesystem;

namespace segcl::cli {

namespace {

constexpr const char* kManifestMagic = "SEGCLSPLIT1";

nlohmann::json split_to_json(const phantom::DatasetSplit& split) {
  auto refs = [](const std::vector<phantom::SliceRef>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : v) arr.push_back({r.volume, r.slice});
    return arr;
  };
  return {{"labeled_train", refs(split.labeled_train)},
          {"labeled_val", refs(split.labeled_val)},
          {"unlabeled_source", split.unlabeled_source},
          {"unlabeled_target", split.unlabeled_target},
          {"test_source", refs(split.test_source)},
          {"test_target", refs(split.test_target)}};
}

phantom::DatasetSplit split_from_json(const nlohmann::json& j) {
  auto refs = [](const nlohmann::json& arr) {
    std::vector<phantom::SliceRef> out;
    for (const auto& r : arr) out.push_back({r.at(0).get<int>(), r.at(1).get<int>()});
    return out;
  };
  phantom::DatasetSplit split;
  split.labeled_train = refs(j.at("labeled_train"));
  split.labeled_val = refs(j.at("labeled_val"));
  split.unlabeled_source = j.at("unlabeled_source").get<std::vector<int>>();
  split.unlabeled_target = j.at("unlabeled_target").get<std::vector<int>>();
  split.test_source = refs(j.at("test_source"));
  split.test_target = refs(j.at("test_target"));
  return split;
}

std::string volume_file_name(int index, phantom::DomainTag domain) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03d.segclvol",
                domain == phantom::DomainTag::source ? "src" : "tgt", index);
  return buf;
}

std::string checkpoint_path(const ExperimentConfig& cfg) {
  return (fs::path(cfg.output_dir) / "checkpoint_best.segclckpt").string();
}

void write_run_outputs(const ExperimentConfig& cfg, const train::TrainResult& result,
                       bool with_head, bool with_predictor,
                       const std::vector<std::string>& class_names) {
  ckpt::save_checkpoint(checkpoint_path(cfg), cfg.model, with_head, with_predictor,
                        result.best.epoch, result.best.epoch, result.history,
                        result.best.params);
  ckpt::write_metrics_log((fs::path(cfg.output_dir) / "metrics.jsonl").string(), result.history,
                          class_names);
}

metrics::RelTable eval_table(const data::Dataset& dataset, const ExperimentConfig& cfg,
                             const train::NamedTensors& params, phantom::DomainTag domain,
                             const std::string& method,
                             const std::vector<metrics::MetricRecord>* baseline) {
  auto records =
      train::evaluate_split(dataset, cfg.model, params, domain, method, cfg.eval.threshold);
  return metrics::relativize(records, baseline ? *baseline : records);
}

}  // namespace

void cmd_generate(const ExperimentConfig& cfg) {
  fs::create_directories(fs::path(cfg.output_dir) / "volumes");

  std::vector<std::string> class_names;
  for (int c = 0; c < cfg.data.num_classes; ++c) class_names.push_back("lesion_" + std::to_string(c));

  nlohmann::json volumes = nlohmann::json::array();
  std::vector<phantom::VolumeInfo> infos;
  int index = 0;
  auto emit = [&](int count, const phantom::DomainProfile& profile, phantom::DomainTag domain) {
    for (int i = 0; i < count; ++i, ++index) {
      const std::string file = volume_file_name(i, domain);
      const std::uint64_t vseed =
          RngStream::derive(cfg.seed, "gen.volume", static_cast<std::uint64_t>(index)).next_u64();
      auto [volume, mask] = phantom::generate_phantom(
          vseed, cfg.data.geometry, profile, cfg.data.num_classes, domain,
          file.substr(0, file.find('.')));
      phantom::save_volume((fs::path(cfg.output_dir) / "volumes" / file).string(), volume, &mask);
      volumes.push_back({{"file", file},
                         {"volume_id", volume.volume_id},
                         {"domain", phantom::to_string(domain)}});
      infos.push_back({volume.volume_id, domain, volume.depth()});
    }
  };
  emit(cfg.data.num_source_volumes, cfg.data.source_profile, phantom::DomainTag::source);
  emit(cfg.data.num_target_volumes, cfg.data.target_profile, phantom::DomainTag::target);

  phantom::StratifyConfig upper = cfg.data.stratify;
  upper.upper_bound = true;
  phantom::StratifyConfig normal = cfg.data.stratify;
  normal.upper_bound = false;

  nlohmann::json manifest{
      {"magic", kManifestMagic},
      {"classes", class_names},
      {"volumes", volumes},
      {"splits",
       {{"default", split_to_json(phantom::stratify(infos, normal, cfg.seed))},
        {"upper_bound", split_to_json(phantom::stratify(infos, upper, cfg.seed))}}}};

  report::write_text_file((fs::path(cfg.output_dir) / "split.json").string(),
                          manifest.dump(2) + "\n");
  std::printf("generated %d source + %d target volumes under %s\n", cfg.data.num_source_volumes,
              cfg.data.num_target_volumes, cfg.output_dir.c_str());
}

data::Dataset load_dataset(const ExperimentConfig& cfg, bool upper_bound_split) {
  const fs::path manifest_path = fs::path(cfg.output_dir) / "split.json";
  std::ifstream in(manifest_path);
  require(in.good(), "io.open",
          "cannot open dataset manifest (run `segcl generate` first): " + manifest_path.string());
  nlohmann::json manifest = nlohmann::json::parse(in, nullptr, false);
  require(!manifest.is_discarded(), "io.header", "manifest is not valid JSON");
  require(manifest.value("magic", "") == kManifestMagic, "io.header", "bad manifest magic");

  data::Dataset dataset;
  dataset.class_names = manifest.at("classes").get<std::vector<std::string>>();
  for (const auto& v : manifest.at("volumes")) {
    const std::string file = v.at("file").get<std::string>();
    auto [volume, mask] =
        phantom::load_volume((fs::path(cfg.output_dir) / "volumes" / file).string());
    require(mask.has_value(), "io.header", "dataset volume lacks mask: " + file);
    dataset.volumes.push_back(std::move(volume));
    dataset.masks.push_back(std::move(mask));
  }
  dataset.split = split_from_json(
      manifest.at("splits").at(upper_bound_split ? "upper_bound" : "default"));
  return dataset;
}

void cmd_train(const ExperimentConfig& cfg, bool resume) {
  fs::create_directories(cfg.output_dir);
  data::Dataset dataset = load_dataset(cfg, cfg.train.regime == train::Regime::upper_bound);

  train::PersistOptions persist;
  persist.state_path = (fs::path(cfg.output_dir) / "train_state.segclstate").string();
  persist.resume = resume;
  persist.config_fingerprint = config_fingerprint(cfg);

  train::TrainResult result = train::run_regime(dataset, cfg.model, cfg.train, nullptr, persist);
  const bool with_head = cfg.train.regime == train::Regime::joint;
  const bool with_predictor =
      with_head && cfg.train.loss.contrastive_kind == losses::ContrastiveKind::siam;
  write_run_outputs(cfg, result, with_head, with_predictor, dataset.class_names);
  std::printf("regime=%s best_epoch=%d mean_val_dice=%.4f checkpoint=%s\n",
              train::to_string(cfg.train.regime), result.best.epoch, result.best.mean_val_dice,
              checkpoint_path(cfg).c_str());
}

void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_file,
              const std::string& baseline_path, const std::string& split) {
  require(split == "source" || split == "target", "cli.args", "--split must be source or target");
  const phantom::DomainTag domain = phantom::domain_from_string(split);
  data::Dataset dataset = load_dataset(cfg, /*upper_bound_split=*/false);

  ckpt::LoadedCheckpoint loaded = ckpt::load_checkpoint(checkpoint_file);
  auto records = train::evaluate_split(dataset, loaded.model, loaded.params, domain, "model",
                                       cfg.eval.threshold);

  bool with_rel = !baseline_path.empty();
  metrics::RelTable table;
  if (with_rel) {
    ckpt::LoadedCheckpoint base = ckpt::load_checkpoint(baseline_path);
    auto base_records = train::evaluate_split(dataset, base.model, base.params, domain,
                                              "baseline", cfg.eval.threshold);
    table = metrics::relativize(records, base_records);
  } else {
    table = metrics::relativize(records, records);
  }

  const std::string csv = report::eval_csv("model", split, table, with_rel);
  const std::string text = report::eval_text("model", split, table, with_rel);
  fs::create_directories(cfg.output_dir);
  report::write_text_file((fs::path(cfg.output_dir) / ("eval_" + split + ".csv")).string(), csv);
  report::write_text_file((fs::path(cfg.output_dir) / ("eval_" + split + ".txt")).string(), text);
  std::fputs(text.c_str(), stdout);
}

namespace {

struct GridMethod {
  std::string name;
  train::Regime regime;
  losses::ContrastiveKind kind;
  train::PairKind pairs;
  model::HeadKind head;
};

}  // namespace

void cmd_reproduce(const ExperimentConfig& cfg, bool with_lambda, bool with_fractions,
                   bool plots) {
  fs::create_directories(cfg.output_dir);
  data::Dataset dataset = load_dataset(cfg, false);
  data::Dataset dataset_upper = load_dataset(cfg, true);

  const std::vector<GridMethod> grid = {
      {"baseline", train::Regime::baseline, losses::ContrastiveKind::clr, train::PairKind::augm,
       model::HeadKind::pool},
      {"upper_bound", train::Regime::upper_bound, losses::ContrastiveKind::clr,
       train::PairKind::augm, model::HeadKind::pool},
      {"clr_finetune(augm,pool)", train::Regime::pretrain_finetune, losses::ContrastiveKind::clr,
       train::PairKind::augm, model::HeadKind::pool},
      {"siam_finetune(augm,pool)", train::Regime::pretrain_finetune,
       losses::ContrastiveKind::siam, train::PairKind::augm, model::HeadKind::pool},
      {"joint_clr(augm,pool)", train::Regime::joint, losses::ContrastiveKind::clr,
       train::PairKind::augm, model::HeadKind::pool},
      {"joint_siam(augm,pool)", train::Regime::joint, losses::ContrastiveKind::siam,
       train::PairKind::augm, model::HeadKind::pool},
      {"joint_clr(slice,pool)", train::Regime::joint, losses::ContrastiveKind::clr,
       train::PairKind::slice, model::HeadKind::pool},
      {"joint_clr(comb,pool)", train::Regime::joint, losses::ContrastiveKind::clr,
       train::PairKind::comb, model::HeadKind::pool},
      {"joint_clr(comb,ch)", train::Regime::joint, losses::ContrastiveKind::clr,
       train::PairKind::comb, model::HeadKind::ch},
  };

  std::vector<metrics::MetricRecord> baseline_tgt, baseline_src;
  std::vector<report::MethodSummary> rows;
  for (const GridMethod& method : grid) {
    model::ModelConfig model_cfg = cfg.model;
    model_cfg.head_kind = method.head;
    train::TrainConfig train_cfg = cfg.train;
    train_cfg.regime = method.regime;
    train_cfg.pair_kind = method.pairs;
    train_cfg.loss.contrastive_kind = method.kind;

    const data::Dataset& ds =
        method.regime == train::Regime::upper_bound ? dataset_upper : dataset;
    train::TrainResult result = train::run_regime(ds, model_cfg, train_cfg);

    auto tgt = train::evaluate_split(dataset, model_cfg, result.best.params,
                                     phantom::DomainTag::target, method.name,
                                     cfg.eval.threshold);
    auto src = train::evaluate_split(dataset, model_cfg, result.best.params,
                                     phantom::DomainTag::source, method.name,
                                     cfg.eval.threshold);
    if (method.name == "baseline") {
      baseline_tgt = tgt;
      baseline_src = src;
    }
    report::MethodSummary row;
    row.method = method.name;
    row.target_all = metrics::relativize(tgt, baseline_tgt).all;
    row.source_all = metrics::relativize(src, baseline_src).all;
    rows.push_back(row);
    std::printf("[reproduce] %-26s tgt dice %.2f (rel %+.2f)  src dice %.2f (rel %+.2f)\n",
                method.name.c_str(), row.target_all.dice_abs, row.target_all.dice_rel,
                row.source_all.dice_abs, row.source_all.dice_rel);
  }

  report::write_text_file((fs::path(cfg.output_dir) / "grid_report.csv").string(),
                          report::grid_csv(rows));
  const std::string text = report::grid_text(rows);
  report::write_text_file((fs::path(cfg.output_dir) / "grid_report.txt").string(), text);
  std::fputs(text.c_str(), stdout);

  if (with_lambda) cmd_ablate_lambda(cfg, plots);
  if (with_fractions) cmd_ablate_fraction(cfg, plots);
}

void cmd_ablate_lambda(const ExperimentConfig& cfg, bool plots) {
  fs::create_directories(cfg.output_dir);
  data::Dataset dataset = load_dataset(cfg, false);
  model::ModelConfig model_cfg = cfg.model;
  train::TrainConfig base_cfg = cfg.train;
  base_cfg.regime = train::Regime::joint;
  train::LambdaReport report =
      train::run_lambda_ablation(dataset, model_cfg, base_cfg, cfg.ablations.lambdas);
  report::write_text_file((fs::path(cfg.output_dir) / "lambda_ablation.csv").string(),
                          report::lambda_csv(report));
  const std::string text = report::lambda_text(report);
  report::write_text_file((fs::path(cfg.output_dir) / "lambda_ablation.txt").string(), text);
  if (plots)
    report::write_text_file((fs::path(cfg.output_dir) / "lambda_ablation.svg").string(),
                            report::lambda_svg(report));
  std::fputs(text.c_str(), stdout);
}

void cmd_ablate_fraction(const ExperimentConfig& cfg, bool plots) {
  fs::create_directories(cfg.output_dir);
  data::Dataset dataset = load_dataset(cfg, false);
  model::ModelConfig model_cfg = cfg.model;
  train::TrainConfig base_cfg = cfg.train;
  base_cfg.regime = train::Regime::joint;
  train::FractionReport report =
      train::run_labeled_fraction_ablation(dataset, model_cfg, base_cfg, cfg.ablations.fractions);
  report::write_text_file((fs::path(cfg.output_dir) / "fraction_ablation.csv").string(),
                          report::fraction_csv(report));
  const std::string text = report::fraction_text(report);
  report::write_text_file((fs::path(cfg.output_dir) / "fraction_ablation.txt").string(), text);
  if (plots)
    report::write_text_file((fs::path(cfg.output_dir) / "fraction_ablation.svg").string(),
                            report::fraction_svg(report));
  std::fputs(text.c_str(), stdout);
}

}  // namespace segcl::cli
