#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "segcl/losses.hpp"
#include "segcl/metrics.hpp"
#include "segcl/pairgen.hpp"
#include "segcl/phantom.hpp"
#include "segcl/unet.hpp"

namespace segcl::data {

/// In-memory dataset: volumes plus the active split over them.
struct Dataset {
  std::vector<phantom::Volume> volumes;
  std::vector<std::optional<phantom::MaskVolume>> masks;
  phantom::DatasetSplit split;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::vector<phantom::VolumeInfo> infos() const;
};

/// Counts ground-truth mask reads per domain during training, so regimes can
/// be audited for target-label leakage.
struct LabelAccessAudit {
  std::size_t source_mask_reads = 0;
  std::size_t target_mask_reads = 0;
};

}  // namespace segcl::data

namespace segcl::train {

enum class Regime { baseline, upper_bound, pretrain_finetune, joint };
enum class PairKind { augm, slice, comb };

const char* to_string(Regime r);
Regime regime_from_string(const std::string& name);
const char* to_string(PairKind k);
PairKind pair_kind_from_string(const std::string& name);

struct TrainConfig {
  Regime regime = Regime::baseline;
  PairKind pair_kind = PairKind::comb;
  int epochs = 200;
  double lr = 1e-3;
  int batch_labeled = 8;
  int batch_pairs_per_domain = 8;
  std::uint64_t seed = 0;
  losses::LossConfig loss;
  double labeled_fraction = 1.0;
  pairgen::AugmConfig augm;
  double sigma_um = 250.0;

  void validate() const;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

struct Checkpoint {
  NamedTensors params;
  int epoch = 0;
  std::vector<double> val_dice_per_class;
  double mean_val_dice = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_sup = 0.0;
  double loss_con_source = 0.0;
  double loss_con_target = 0.0;
  std::vector<double> val_dice_per_class;
  double mean_val_dice = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
  std::size_t labeled_slices_used = 0;
};

/// Segmentation network plus the contrastive attachments a regime needs.
struct ModelBundle {
  model::ModelConfig cfg;
  std::unique_ptr<model::UNet<float>> net;
  std::unique_ptr<model::ProjectionHead<float>> head;
  std::unique_ptr<model::Predictor<float>> predictor;

  static ModelBundle build(const model::ModelConfig& cfg, bool with_head, bool with_predictor,
                           std::uint64_t seed);
  std::vector<nn::Param<float>*> all_params();
  NamedTensors snapshot();
  void restore(const NamedTensors& params, bool allow_missing = false);
};

/// Epoch-boundary persistence for interruptible runs; empty path disables it.
struct PersistOptions {
  std::string state_path;
  bool resume = false;
  std::string config_fingerprint;
};

/// Indices of the labeled-fraction subset: a prefix of one seeded
/// permutation, so subsets are nested across fractions for a fixed seed.
std::vector<int> labeled_subset_indices(std::size_t n, double fraction, std::uint64_t seed);

TrainResult train_supervised(const data::Dataset& dataset, const model::ModelConfig& model_cfg,
                             const TrainConfig& cfg, data::LabelAccessAudit* audit = nullptr,
                             const PersistOptions& persist = {});

/// Contrastive-only optimization on unlabeled target volumes; the decoder
/// never receives gradients. Returns the final parameter snapshot.
NamedTensors pretrain_contrastive(const data::Dataset& dataset,
                                  const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                                  data::LabelAccessAudit* audit = nullptr);

/// Fresh network with the encoder initialized from pretrained parameters,
/// then supervised training (same checkpoint rule as train_supervised).
TrainResult finetune(const NamedTensors& pretrained, const data::Dataset& dataset,
                     const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                     data::LabelAccessAudit* audit = nullptr, const PersistOptions& persist = {});

TrainResult train_joint(const data::Dataset& dataset, const model::ModelConfig& model_cfg,
                        const TrainConfig& cfg, data::LabelAccessAudit* audit = nullptr,
                        const PersistOptions& persist = {});

/// Runs the configured regime end to end.
TrainResult run_regime(const data::Dataset& dataset, const model::ModelConfig& model_cfg,
                       const TrainConfig& cfg, data::LabelAccessAudit* audit = nullptr,
                       const PersistOptions& persist = {});

std::vector<metrics::MetricRecord> evaluate_split(const data::Dataset& dataset,
                                                  const model::ModelConfig& model_cfg,
                                                  const NamedTensors& params,
                                                  phantom::DomainTag domain,
                                                  const std::string& method_name,
                                                  double threshold = 0.5);

struct LambdaReportRow {
  double lambda = 0.0;
  double tgt_dice_abs = 0.0, tgt_dice_rel = 0.0, tgt_uvd_abs = 0.0, tgt_uvd_rel = 0.0;
  double src_dice_abs = 0.0, src_dice_rel = 0.0, src_uvd_abs = 0.0, src_uvd_rel = 0.0;
};
struct LambdaReport {
  double reference_lambda = 20.0;
  std::vector<LambdaReportRow> rows;
};

/// Joint training per lambda; metrics relative to the reference run
/// (lambda = 20), which is trained once and reused when listed.
LambdaReport run_lambda_ablation(const data::Dataset& dataset,
                                 const model::ModelConfig& model_cfg, const TrainConfig& base_cfg,
                                 const std::vector<double>& lambdas);

struct FractionReportRow {
  double fraction = 0.0;
  std::size_t labeled_slices = 0;
  double tgt_joint_dice = 0.0, tgt_baseline_dice = 0.0;
  double src_joint_dice = 0.0, src_baseline_dice = 0.0;
  double tgt_delta() const { return tgt_joint_dice - tgt_baseline_dice; }
  double src_delta() const { return src_joint_dice - src_baseline_dice; }
};
struct FractionReport {
  std::vector<FractionReportRow> rows;
};

/// Baseline and joint model per labeled fraction; validation set fixed.
FractionReport run_labeled_fraction_ablation(const data::Dataset& dataset,
                                             const model::ModelConfig& model_cfg,
                                             const TrainConfig& base_cfg,
                                             const std::vector<double>& fractions);

}  // namespace segcl::train
