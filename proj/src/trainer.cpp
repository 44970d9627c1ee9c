#include "segcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "segcl/checkpoint.hpp"

namespace segcl::data {

std::vector<phantom::VolumeInfo> Dataset::infos() const {
  std::vector<phantom::VolumeInfo> out;
  out.reserve(volumes.size());
  for (const auto& v : volumes) out.push_back({v.volume_id, v.domain, v.depth()});
  return out;
}

}  // namespace segcl::data

namespace segcl::train {

const char* to_string(Regime r) {
  switch (r) {
    case Regime::baseline: return "baseline";
    case Regime::upper_bound: return "upper_bound";
    case Regime::pretrain_finetune: return "pretrain_finetune";
    case Regime::joint: return "joint";
  }
  return "?";
}

Regime regime_from_string(const std::string& name) {
  if (name == "baseline") return Regime::baseline;
  if (name == "upper_bound") return Regime::upper_bound;
  if (name == "pretrain_finetune") return Regime::pretrain_finetune;
  if (name == "joint") return Regime::joint;
  throw Error("train.config", "unknown regime: " + name);
}

const char* to_string(PairKind k) {
  switch (k) {
    case PairKind::augm: return "augm";
    case PairKind::slice: return "slice";
    case PairKind::comb: return "comb";
  }
  return "?";
}

PairKind pair_kind_from_string(const std::string& name) {
  if (name == "augm") return PairKind::augm;
  if (name == "slice") return PairKind::slice;
  if (name == "comb") return PairKind::comb;
  throw Error("train.config", "unknown pair_kind: " + name);
}

void TrainConfig::validate() const {
  require(epochs >= 1, "train.config", "epochs must be >= 1");
  require(lr > 0.0, "train.config", "learning rate must be > 0");
  require(batch_labeled >= 1, "train.config", "batch_labeled must be >= 1");
  require(labeled_fraction > 0.0 && labeled_fraction <= 1.0, "train.fraction",
          "labeled_fraction must be in (0,1]");
  require(sigma_um > 0.0, "train.config", "sigma_um must be > 0");
  loss.validate();
  augm.validate();
  const bool needs_pairs = regime == Regime::joint || regime == Regime::pretrain_finetune;
  if (needs_pairs && loss.contrastive_kind == losses::ContrastiveKind::clr) {
    require(batch_pairs_per_domain >= 2, "train.config",
            "contrastive_kind=clr needs batch_pairs_per_domain >= 2 (as_written denominator)");
  }
  if (needs_pairs) {
    require(batch_pairs_per_domain >= 1, "train.config", "batch_pairs_per_domain must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// ModelBundle
// ---------------------------------------------------------------------------
ModelBundle ModelBundle::build(const model::ModelConfig& cfg, bool with_head, bool with_predictor,
                               std::uint64_t seed) {
  ModelBundle bundle;
  bundle.cfg = cfg;
  bundle.net = std::make_unique<model::UNet<float>>(cfg);
  bundle.net->init(seed);
  if (with_head) {
    bundle.head = model::make_head<float>(cfg);
    RngStream rng = RngStream::derive(seed, "head.init");
    bundle.head->init(rng);
  }
  if (with_predictor) {
    bundle.predictor = std::make_unique<model::Predictor<float>>(cfg);
    RngStream rng = RngStream::derive(seed, "predictor.init");
    bundle.predictor->init(rng);
  }
  return bundle;
}

std::vector<nn::Param<float>*> ModelBundle::all_params() {
  std::vector<nn::Param<float>*> out;
  auto grab = [&out](nn::Param<float>& p) { out.push_back(&p); };
  net->visit_params(grab);
  if (head) head->visit(grab);
  if (predictor) predictor->visit(grab);
  return out;
}

NamedTensors ModelBundle::snapshot() {
  NamedTensors out;
  for (nn::Param<float>* p : all_params()) out.emplace_back(p->name, p->value);
  return out;
}

void ModelBundle::restore(const NamedTensors& params, bool allow_missing) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, value] : params) by_name[name] = &value;
  for (nn::Param<float>* p : all_params()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      require(allow_missing, "checkpoint.missing_param", "checkpoint lacks parameter " + p->name);
      continue;
    }
    require(it->second->shape == p->value.shape, "checkpoint.shape_mismatch",
            "parameter shape mismatch for " + p->name);
    p->value = *it->second;
  }
}

// ---------------------------------------------------------------------------
// Slice materialization and batching
// ---------------------------------------------------------------------------
namespace {

struct LabeledSlice {
  Tensor<float> image;        // (H,W)
  Tensor<std::uint8_t> mask;  // (C,H,W)
  std::string slice_id;
  phantom::DomainTag domain = phantom::DomainTag::source;
};

std::vector<LabeledSlice> materialize_labeled(const data::Dataset& dataset,
                                              const std::vector<phantom::SliceRef>& refs,
                                              data::LabelAccessAudit* audit) {
  std::vector<LabeledSlice> out;
  out.reserve(refs.size());
  for (const phantom::SliceRef& ref : refs) {
    const phantom::Volume& vol = dataset.volumes[ref.volume];
    require(dataset.masks[ref.volume].has_value(), "train.empty",
            "labeled slice references volume without mask: " + vol.volume_id);
    const phantom::MaskVolume& mv = *dataset.masks[ref.volume];
    pairgen::SliceSample s = pairgen::extract_slice(vol, &mv, ref.slice);
    if (audit) {
      (vol.domain == phantom::DomainTag::source ? audit->source_mask_reads
                                                : audit->target_mask_reads) += 1;
    }
    LabeledSlice ls;
    const int h = s.image.shape[0], w = s.image.shape[1], c = s.mask->shape[2];
    ls.image = std::move(s.image);
    ls.mask = Tensor<std::uint8_t>({c, h, w});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int k = 0; k < c; ++k) ls.mask.at3(k, y, x) = s.mask->at3(y, x, k);
    ls.slice_id = vol.volume_id + ":" + std::to_string(ref.slice);
    ls.domain = vol.domain;
    out.push_back(std::move(ls));
  }
  return out;
}

std::vector<int> seeded_permutation(std::size_t n, RngStream rng) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = static_cast<int>(n) - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform_int(0, i + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

void fill_batch(const std::vector<LabeledSlice>& slices, const std::vector<int>& order,
                std::size_t begin, std::size_t end, Tensor<float>& x, Tensor<std::uint8_t>& y) {
  const int b = static_cast<int>(end - begin);
  const int c = slices[0].mask.shape[0];
  const int h = slices[0].image.shape[0], w = slices[0].image.shape[1];
  x = Tensor<float>({b, 1, h, w});
  y = Tensor<std::uint8_t>({b, c, h, w});
  for (int i = 0; i < b; ++i) {
    const LabeledSlice& s = slices[order[begin + i]];
    std::copy(s.image.data.begin(), s.image.data.end(),
              x.ptr() + static_cast<std::size_t>(i) * h * w);
    std::copy(s.mask.data.begin(), s.mask.data.end(),
              y.ptr() + static_cast<std::size_t>(i) * c * h * w);
  }
}

std::vector<double> validate_dice(model::UNet<float>& net, const std::vector<LabeledSlice>& val,
                                  int num_classes, int batch, double threshold) {
  std::vector<double> sums(num_classes, 0.0);
  if (val.empty()) return sums;
  std::vector<int> order(val.size());
  std::iota(order.begin(), order.end(), 0);
  const int h = val[0].image.shape[0], w = val[0].image.shape[1];
  for (std::size_t begin = 0; begin < val.size(); begin += batch) {
    const std::size_t end = std::min(val.size(), begin + batch);
    Tensor<float> x;
    Tensor<std::uint8_t> y;
    fill_batch(val, order, begin, end, x, y);
    Tensor<float> p = net.forward_segment(x, /*train=*/false, nullptr);
    for (std::size_t i = 0; i < end - begin; ++i) {
      for (int c = 0; c < num_classes; ++c) {
        Tensor<std::uint8_t> pred({h, w}), gt({h, w});
        const std::size_t base = ((i * num_classes) + c) * static_cast<std::size_t>(h) * w;
        for (std::size_t e = 0; e < static_cast<std::size_t>(h) * w; ++e) {
          pred[e] = p.data[base + e] >= threshold ? 1 : 0;
          gt[e] = y.data[base + e];
        }
        sums[c] += metrics::dice(pred, gt);
      }
    }
  }
  for (double& s : sums) s /= static_cast<double>(val.size());
  return sums;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<LabeledSlice> fraction_subset(std::vector<LabeledSlice> slices, double fraction,
                                          std::uint64_t seed) {
  if (fraction >= 1.0) return slices;
  std::vector<int> keep = labeled_subset_indices(slices.size(), fraction, seed);
  std::vector<LabeledSlice> out;
  out.reserve(keep.size());
  for (int i : keep) out.push_back(std::move(slices[i]));
  return out;
}

struct AdamStateNames {
  static NamedTensors snapshot(nn::Adam<float>& adam, const char* which) {
    NamedTensors out;
    auto& moments = which[0] == 'm' ? adam.moments1() : adam.moments2();
    const auto& params = adam.params();
    for (std::size_t i = 0; i < params.size(); ++i)
      out.emplace_back(params[i]->name, moments[i]);
    return out;
  }
  static void restore(nn::Adam<float>& adam, const NamedTensors& saved, const char* which) {
    auto& moments = which[0] == 'm' ? adam.moments1() : adam.moments2();
    const auto& params = adam.params();
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& [name, value] : saved) by_name[name] = &value;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto it = by_name.find(params[i]->name);
      require(it != by_name.end(), "checkpoint.missing_param",
              "optimizer state lacks " + params[i]->name);
      require(it->second->shape == moments[i].shape, "checkpoint.shape_mismatch",
              "optimizer state shape mismatch for " + params[i]->name);
      moments[i] = *it->second;
    }
  }
};

// Shared epoch loop used by all supervised-style and joint regimes. The
// per-step work is regime-specific and returns (loss_total, loss_sup,
// lcon_src, lcon_tgt).
struct EpochLoopHooks {
  std::function<std::array<double, 4>(std::size_t begin, std::size_t end,
                                      const std::vector<int>& order, std::int64_t step)>
      run_step;
};

TrainResult run_epoch_loop(ModelBundle& bundle, nn::Adam<float>& adam,
                           const std::vector<LabeledSlice>& labeled,
                           const std::vector<LabeledSlice>& val, const TrainConfig& cfg,
                           const EpochLoopHooks& hooks, const PersistOptions& persist) {
  const int num_classes = bundle.cfg.num_classes;
  TrainResult result;
  result.labeled_slices_used = labeled.size();

  std::int64_t global_step = 0;
  int start_epoch = 1;
  NamedTensors best_params = bundle.snapshot();
  int best_epoch = 0;
  std::vector<double> best_val(num_classes, 0.0);
  double best_mean = -1.0;

  if (persist.resume && !persist.state_path.empty() &&
      std::filesystem::exists(persist.state_path)) {
    ckpt::TrainState state = ckpt::load_train_state(persist.state_path);
    require(state.config_fingerprint == persist.config_fingerprint, "train.resume_mismatch",
            "state file belongs to a different configuration");
    bundle.restore(state.params);
    AdamStateNames::restore(adam, state.adam_m, "m");
    AdamStateNames::restore(adam, state.adam_v, "v");
    adam.set_t(state.global_step);
    global_step = state.global_step;
    start_epoch = state.epochs_completed + 1;
    best_params = state.best_params;
    best_epoch = state.best_epoch;
    best_val = state.best_val;
    best_mean = state.best_mean;
    result.history = state.history;
  }

  for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order =
        seeded_permutation(labeled.size(), RngStream::derive(cfg.seed, "shuffle", epoch));
    double sum_total = 0, sum_sup = 0, sum_src = 0, sum_tgt = 0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < labeled.size();
         begin += static_cast<std::size_t>(cfg.batch_labeled)) {
      const std::size_t end =
          std::min(labeled.size(), begin + static_cast<std::size_t>(cfg.batch_labeled));
      std::array<double, 4> losses = hooks.run_step(begin, end, order, global_step);
      sum_total += losses[0];
      sum_sup += losses[1];
      sum_src += losses[2];
      sum_tgt += losses[3];
      ++steps;
      ++global_step;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.loss_total = steps ? sum_total / static_cast<double>(steps) : 0.0;
    record.loss_sup = steps ? sum_sup / static_cast<double>(steps) : 0.0;
    record.loss_con_source = steps ? sum_src / static_cast<double>(steps) : 0.0;
    record.loss_con_target = steps ? sum_tgt / static_cast<double>(steps) : 0.0;
    record.val_dice_per_class =
        validate_dice(*bundle.net, val, num_classes, cfg.batch_labeled, 0.5);
    record.mean_val_dice = mean_of(record.val_dice_per_class);
    result.history.push_back(record);

    if (record.mean_val_dice > best_mean) {  // strict: ties keep the earliest epoch
      best_mean = record.mean_val_dice;
      best_epoch = epoch;
      best_val = record.val_dice_per_class;
      best_params = bundle.snapshot();
    }

    if (!persist.state_path.empty()) {
      ckpt::TrainState state;
      state.config_fingerprint = persist.config_fingerprint;
      state.epochs_completed = epoch;
      state.global_step = global_step;
      state.params = bundle.snapshot();
      state.adam_m = AdamStateNames::snapshot(adam, "m");
      state.adam_v = AdamStateNames::snapshot(adam, "v");
      state.best_params = best_params;
      state.best_epoch = best_epoch;
      state.best_val = best_val;
      state.best_mean = best_mean;
      state.history = result.history;
      ckpt::save_train_state(persist.state_path, state);
    }
  }

  result.best.params = std::move(best_params);
  result.best.epoch = best_epoch;
  result.best.val_dice_per_class = best_val;
  result.best.mean_val_dice = best_mean < 0 ? 0.0 : best_mean;
  return result;
}

// Contrastive pair batch for one domain: images stacked as (2B,1,H,W) with
// the first B rows holding x' and the last B holding x''.
Tensor<float> sample_pair_batch(const data::Dataset& dataset, const std::vector<int>& pool,
                                const TrainConfig& cfg, RngStream& rng) {
  const int b = cfg.batch_pairs_per_domain;
  require(!pool.empty(), "train.empty", "no unlabeled volumes for contrastive pairs");
  std::vector<pairgen::ContrastivePair> pairs;
  pairs.reserve(b);
  for (int i = 0; i < b; ++i) {
    const phantom::Volume& vol =
        dataset.volumes[pool[static_cast<std::size_t>(rng.uniform_int(0, pool.size()))]];
    const int slice = static_cast<int>(rng.uniform_int(0, vol.depth()));
    const pairgen::SliceSigma sigma =
        pairgen::SliceSigma::from_um(static_cast<float>(cfg.sigma_um), vol.spacing_um[0]);
    switch (cfg.pair_kind) {
      case PairKind::augm: {
        pairgen::SliceSample s = pairgen::extract_slice(vol, nullptr, slice);
        pairs.push_back(pairgen::pair_augm(s, cfg.augm, rng));
        break;
      }
      case PairKind::slice:
        pairs.push_back(pairgen::pair_slice(vol, slice, sigma, rng));
        break;
      case PairKind::comb:
        pairs.push_back(pairgen::pair_comb(vol, slice, sigma, cfg.augm, rng));
        break;
    }
  }
  const int h = pairs[0].first.image.shape[0], w = pairs[0].first.image.shape[1];
  Tensor<float> x({2 * b, 1, h, w});
  for (int i = 0; i < b; ++i) {
    std::copy(pairs[i].first.image.data.begin(), pairs[i].first.image.data.end(),
              x.ptr() + static_cast<std::size_t>(i) * h * w);
    std::copy(pairs[i].second.image.data.begin(), pairs[i].second.image.data.end(),
              x.ptr() + static_cast<std::size_t>(b + i) * h * w);
  }
  return x;
}

// Encoder+head pass over one domain's pair batch, loss, and backward with
// the 1/2 domain weight from the joint objective. Returns the loss value.
double contrastive_branch(ModelBundle& bundle, const data::Dataset& dataset,
                          const std::vector<int>& pool, const TrainConfig& cfg,
                          const char* domain_tag, std::int64_t step, bool with_grad) {
  RngStream pair_rng =
      RngStream::derive(cfg.seed, std::string("pairs.") + domain_tag, static_cast<std::uint64_t>(step));
  Tensor<float> x = sample_pair_batch(dataset, pool, cfg, pair_rng);
  RngStream drop_rng = RngStream::derive(cfg.seed, std::string("dropout.") + domain_tag,
                                         static_cast<std::uint64_t>(step));
  Tensor<float> h = bundle.net->forward_encode(x, /*train=*/true, &drop_rng);
  Tensor<float> z = bundle.head->forward(h);
  const int b = cfg.batch_pairs_per_domain;
  const int d = z.shape[1];
  Tensor<float> zp({b, d}), zpp({b, d});
  std::copy(z.ptr(), z.ptr() + static_cast<std::size_t>(b) * d, zp.ptr());
  std::copy(z.ptr() + static_cast<std::size_t>(b) * d, z.ptr() + static_cast<std::size_t>(2 * b) * d,
            zpp.ptr());

  Tensor<float> dzp, dzpp;
  double lcon = 0.0;
  if (cfg.loss.contrastive_kind == losses::ContrastiveKind::clr) {
    lcon = losses::ntxent_loss<float>(zp, zpp, static_cast<float>(cfg.loss.tau),
                                      cfg.loss.denominator_mode, with_grad ? &dzp : nullptr,
                                      with_grad ? &dzpp : nullptr);
    if (with_grad) {
      for (auto& v : dzp.data) v *= 0.5f;
      for (auto& v : dzpp.data) v *= 0.5f;
    }
  } else {
    lcon = losses::simsiam_loss<float>(zp, zpp, *bundle.predictor, with_grad ? &dzp : nullptr,
                                       with_grad ? &dzpp : nullptr, 0.5f);
  }
  if (with_grad) {
    Tensor<float> dz({2 * b, d});
    std::copy(dzp.data.begin(), dzp.data.end(), dz.ptr());
    std::copy(dzpp.data.begin(), dzpp.data.end(), dz.ptr() + static_cast<std::size_t>(b) * d);
    Tensor<float> dh = bundle.head->backward(dz);
    bundle.net->backward_encode(dh);
  }
  return lcon;
}

}  // namespace

std::vector<int> labeled_subset_indices(std::size_t n, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction <= 1.0, "train.fraction",
          "labeled_fraction must be in (0,1]");
  const std::size_t keep = static_cast<std::size_t>(fraction * static_cast<double>(n));
  require(keep >= 1, "train.empty",
          "labeled_fraction leaves no training slices (" + std::to_string(n) + " available)");
  // Prefix of one seeded permutation: subsets for smaller fractions nest
  // inside those for larger ones.
  std::vector<int> perm = seeded_permutation(n, RngStream::derive(seed, "fraction"));
  perm.resize(keep);
  return perm;
}

// ---------------------------------------------------------------------------
// Regimes
// ---------------------------------------------------------------------------
namespace {

TrainResult supervised_loop(ModelBundle& bundle, const data::Dataset& dataset,
                            const TrainConfig& cfg, data::LabelAccessAudit* audit,
                            const PersistOptions& persist) {
  cfg.validate();
  std::vector<LabeledSlice> labeled =
      materialize_labeled(dataset, dataset.split.labeled_train, audit);
  require(!labeled.empty(), "train.empty", "no labeled training slices in split");
  labeled = fraction_subset(std::move(labeled), cfg.labeled_fraction, cfg.seed);
  std::vector<LabeledSlice> val = materialize_labeled(dataset, dataset.split.labeled_val, audit);

  nn::Adam<float> adam(cfg.lr);
  adam.attach(bundle.all_params());

  const float eps = static_cast<float>(cfg.loss.eps);
  EpochLoopHooks hooks;
  hooks.run_step = [&](std::size_t begin, std::size_t end, const std::vector<int>& order,
                       std::int64_t step) {
    Tensor<float> x;
    Tensor<std::uint8_t> y;
    fill_batch(labeled, order, begin, end, x, y);
    RngStream drop_rng = RngStream::derive(cfg.seed, "dropout", static_cast<std::uint64_t>(step));
    Tensor<float> p = bundle.net->forward_segment(x, /*train=*/true, &drop_rng);
    Tensor<float> dp;
    const double loss = losses::log_dice_loss<float>(p, y, eps, &dp);
    require(std::isfinite(loss), "loss.nonfinite", "supervised loss diverged");
    adam.zero_grad();
    bundle.net->backward_segment(dp);
    adam.step();
    return std::array<double, 4>{loss, loss, 0.0, 0.0};
  };
  return run_epoch_loop(bundle, adam, labeled, val, cfg, hooks, persist);
}

}  // namespace

TrainResult train_supervised(const data::Dataset& dataset, const model::ModelConfig& model_cfg,
                             const TrainConfig& cfg, data::LabelAccessAudit* audit,
                             const PersistOptions& persist) {
  ModelBundle bundle = ModelBundle::build(model_cfg, /*with_head=*/false,
                                          /*with_predictor=*/false, cfg.seed);
  return supervised_loop(bundle, dataset, cfg, audit, persist);
}

NamedTensors pretrain_contrastive(const data::Dataset& dataset,
                                  const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                                  data::LabelAccessAudit* audit) {
  (void)audit;  // pretraining touches no labels
  cfg.validate();
  const bool siam = cfg.loss.contrastive_kind == losses::ContrastiveKind::siam;
  ModelBundle bundle = ModelBundle::build(model_cfg, /*with_head=*/true, siam, cfg.seed);
  require(!dataset.split.unlabeled_target.empty(), "train.empty",
          "pretraining needs unlabeled target volumes");

  nn::Adam<float> adam(cfg.lr);
  adam.attach(bundle.all_params());

  const std::size_t per_epoch = std::max<std::size_t>(
      1, (dataset.split.unlabeled_target.size() + cfg.batch_pairs_per_domain - 1) /
             static_cast<std::size_t>(cfg.batch_pairs_per_domain));
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < per_epoch; ++s) {
      adam.zero_grad();
      double lcon = contrastive_branch(bundle, dataset, dataset.split.unlabeled_target, cfg,
                                       "tgt", step, /*with_grad=*/true);
      require(std::isfinite(lcon), "loss.nonfinite", "contrastive pretraining diverged");
      adam.step();
      ++step;
    }
  }
  return bundle.snapshot();
}

TrainResult finetune(const NamedTensors& pretrained, const data::Dataset& dataset,
                     const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                     data::LabelAccessAudit* audit, const PersistOptions& persist) {
  ModelBundle bundle = ModelBundle::build(model_cfg, /*with_head=*/false,
                                          /*with_predictor=*/false, cfg.seed);
  // Encoder weights come from pretraining; the decoder never trained there
  // and starts fresh.
  NamedTensors encoder_only;
  for (const auto& [name, value] : pretrained) {
    if (name.rfind("enc", 0) == 0) encoder_only.emplace_back(name, value);
  }
  require(!encoder_only.empty(), "checkpoint.missing_param",
          "pretrained parameters contain no encoder tensors");
  bundle.restore(encoder_only, /*allow_missing=*/true);
  return supervised_loop(bundle, dataset, cfg, audit, persist);
}

TrainResult train_joint(const data::Dataset& dataset, const model::ModelConfig& model_cfg,
                        const TrainConfig& cfg, data::LabelAccessAudit* audit,
                        const PersistOptions& persist) {
  cfg.validate();
  const bool siam = cfg.loss.contrastive_kind == losses::ContrastiveKind::siam;
  ModelBundle bundle = ModelBundle::build(model_cfg, /*with_head=*/true, siam, cfg.seed);

  std::vector<LabeledSlice> labeled =
      materialize_labeled(dataset, dataset.split.labeled_train, audit);
  require(!labeled.empty(), "train.empty", "no labeled training slices in split");
  labeled = fraction_subset(std::move(labeled), cfg.labeled_fraction, cfg.seed);
  std::vector<LabeledSlice> val = materialize_labeled(dataset, dataset.split.labeled_val, audit);
  require(!dataset.split.unlabeled_source.empty() && !dataset.split.unlabeled_target.empty(),
          "train.empty", "joint training needs unlabeled volumes in both domains");

  nn::Adam<float> adam(cfg.lr);
  adam.attach(bundle.all_params());

  const float eps = static_cast<float>(cfg.loss.eps);
  const float lambda = static_cast<float>(cfg.loss.lambda);
  EpochLoopHooks hooks;
  hooks.run_step = [&](std::size_t begin, std::size_t end, const std::vector<int>& order,
                       std::int64_t step) {
    adam.zero_grad();

    Tensor<float> x;
    Tensor<std::uint8_t> y;
    fill_batch(labeled, order, begin, end, x, y);
    RngStream drop_rng = RngStream::derive(cfg.seed, "dropout", static_cast<std::uint64_t>(step));
    Tensor<float> p = bundle.net->forward_segment(x, /*train=*/true, &drop_rng);
    Tensor<float> dp;
    const double lsup = losses::log_dice_loss<float>(p, y, eps, &dp);
    for (auto& v : dp.data) v *= lambda;
    bundle.net->backward_segment(dp);

    const double lcon_src = contrastive_branch(bundle, dataset, dataset.split.unlabeled_source,
                                               cfg, "src", step, /*with_grad=*/true);
    const double lcon_tgt = contrastive_branch(bundle, dataset, dataset.split.unlabeled_target,
                                               cfg, "tgt", step, /*with_grad=*/true);
    const double total =
        losses::total_loss<double>(lcon_src, lcon_tgt, lsup, cfg.loss.lambda);
    adam.step();
    return std::array<double, 4>{total, lsup, lcon_src, lcon_tgt};
  };
  return run_epoch_loop(bundle, adam, labeled, val, cfg, hooks, persist);
}

TrainResult run_regime(const data::Dataset& dataset, const model::ModelConfig& model_cfg,
                       const TrainConfig& cfg, data::LabelAccessAudit* audit,
                       const PersistOptions& persist) {
  switch (cfg.regime) {
    case Regime::baseline:
    case Regime::upper_bound:
      return train_supervised(dataset, model_cfg, cfg, audit, persist);
    case Regime::pretrain_finetune: {
      NamedTensors pretrained = pretrain_contrastive(dataset, model_cfg, cfg, audit);
      return finetune(pretrained, dataset, model_cfg, cfg, audit, persist);
    }
    case Regime::joint:
      return train_joint(dataset, model_cfg, cfg, audit, persist);
  }
  throw Error("train.config", "unknown regime");
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------
std::vector<metrics::MetricRecord> evaluate_split(const data::Dataset& dataset,
                                                  const model::ModelConfig& model_cfg,
                                                  const NamedTensors& params,
                                                  phantom::DomainTag domain,
                                                  const std::string& method_name,
                                                  double threshold) {
  ModelBundle bundle = ModelBundle::build(model_cfg, /*with_head=*/false,
                                          /*with_predictor=*/false, 0);
  bundle.restore(params, /*allow_missing=*/false);

  const std::vector<phantom::SliceRef>& refs = domain == phantom::DomainTag::source
                                                   ? dataset.split.test_source
                                                   : dataset.split.test_target;
  require(!refs.empty(), "eval.empty", "test split is empty");
  std::vector<metrics::MetricRecord> records;
  const int num_classes = dataset.num_classes();
  const int batch = 8;
  for (std::size_t begin = 0; begin < refs.size(); begin += batch) {
    const std::size_t end = std::min(refs.size(), begin + batch);
    const int b = static_cast<int>(end - begin);
    const phantom::Volume& v0 = dataset.volumes[refs[begin].volume];
    const int h = v0.height(), w = v0.width();
    Tensor<float> x({b, 1, h, w});
    for (int i = 0; i < b; ++i) {
      const phantom::SliceRef& ref = refs[begin + i];
      pairgen::SliceSample s = pairgen::extract_slice(dataset.volumes[ref.volume], nullptr,
                                                      ref.slice);
      std::copy(s.image.data.begin(), s.image.data.end(),
                x.ptr() + static_cast<std::size_t>(i) * h * w);
    }
    Tensor<float> p = bundle.net->forward_segment(x, /*train=*/false, nullptr);
    for (int i = 0; i < b; ++i) {
      const phantom::SliceRef& ref = refs[begin + i];
      const phantom::Volume& vol = dataset.volumes[ref.volume];
      require(dataset.masks[ref.volume].has_value(), "eval.missing_mask",
              "test volume lacks ground truth: " + vol.volume_id);
      const phantom::MaskVolume& mv = *dataset.masks[ref.volume];
      for (int c = 0; c < num_classes; ++c) {
        Tensor<std::uint8_t> pred({h, w}), gt({h, w});
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx) {
            pred.at2(yy, xx) = p.at4(i, c, yy, xx) >= threshold ? 1 : 0;
            gt.at2(yy, xx) =
                mv.labels.data[((static_cast<std::size_t>(ref.slice) * h + yy) * w + xx) *
                                   num_classes +
                               c];
          }
        metrics::MetricRecord r;
        r.method = method_name;
        r.domain = domain;
        r.class_name = dataset.class_names[c];
        r.slice_id = vol.volume_id + ":" + std::to_string(ref.slice);
        r.dice = metrics::dice(pred, gt);
        r.uvd_um3 = metrics::uvd_um3(pred, gt, {vol.spacing_um[1], vol.spacing_um[2]},
                                     vol.spacing_um[0]);
        records.push_back(std::move(r));
      }
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------
namespace {

double mean_uvd_table(const std::vector<metrics::MetricRecord>& records) {
  double s = 0;
  for (const auto& r : records) s += metrics::uvd_table_units(r.uvd_um3);
  return records.empty() ? 0.0 : s / static_cast<double>(records.size());
}

struct EvalAggregates {
  double tgt_dice = 0, tgt_uvd = 0, src_dice = 0, src_uvd = 0;
};

EvalAggregates eval_both_domains(const data::Dataset& dataset,
                                 const model::ModelConfig& model_cfg, const NamedTensors& params,
                                 const std::string& name) {
  EvalAggregates agg;
  auto tgt = evaluate_split(dataset, model_cfg, params, phantom::DomainTag::target, name);
  auto src = evaluate_split(dataset, model_cfg, params, phantom::DomainTag::source, name);
  agg.tgt_dice = metrics::mean_dice_percent(tgt);
  agg.tgt_uvd = mean_uvd_table(tgt);
  agg.src_dice = metrics::mean_dice_percent(src);
  agg.src_uvd = mean_uvd_table(src);
  return agg;
}

}  // namespace

LambdaReport run_lambda_ablation(const data::Dataset& dataset,
                                 const model::ModelConfig& model_cfg, const TrainConfig& base_cfg,
                                 const std::vector<double>& lambdas) {
  LambdaReport report;
  report.reference_lambda = 20.0;

  TrainConfig ref_cfg = base_cfg;
  ref_cfg.regime = Regime::joint;
  ref_cfg.loss.lambda = report.reference_lambda;
  TrainResult ref = train_joint(dataset, model_cfg, ref_cfg);
  EvalAggregates ref_agg = eval_both_domains(dataset, model_cfg, ref.best.params, "lambda_ref");

  for (double lambda : lambdas) {
    EvalAggregates agg;
    if (lambda == report.reference_lambda) {
      agg = ref_agg;
    } else {
      TrainConfig cfg = ref_cfg;
      cfg.loss.lambda = lambda;
      TrainResult run = train_joint(dataset, model_cfg, cfg);
      agg = eval_both_domains(dataset, model_cfg, run.best.params,
                              "lambda_" + std::to_string(lambda));
    }
    LambdaReportRow row;
    row.lambda = lambda;
    row.tgt_dice_abs = agg.tgt_dice;
    row.tgt_dice_rel = agg.tgt_dice - ref_agg.tgt_dice;
    row.tgt_uvd_abs = agg.tgt_uvd;
    row.tgt_uvd_rel = agg.tgt_uvd - ref_agg.tgt_uvd;
    row.src_dice_abs = agg.src_dice;
    row.src_dice_rel = agg.src_dice - ref_agg.src_dice;
    row.src_uvd_abs = agg.src_uvd;
    row.src_uvd_rel = agg.src_uvd - ref_agg.src_uvd;
    report.rows.push_back(row);
  }
  return report;
}

FractionReport run_labeled_fraction_ablation(const data::Dataset& dataset,
                                             const model::ModelConfig& model_cfg,
                                             const TrainConfig& base_cfg,
                                             const std::vector<double>& fractions) {
  FractionReport report;
  for (double fraction : fractions) {
    require(fraction > 0.0 && fraction <= 1.0, "train.fraction",
            "fractions must lie in (0,1]");
    TrainConfig joint_cfg = base_cfg;
    joint_cfg.regime = Regime::joint;
    joint_cfg.labeled_fraction = fraction;
    TrainConfig sup_cfg = joint_cfg;
    sup_cfg.regime = Regime::baseline;

    TrainResult joint = train_joint(dataset, model_cfg, joint_cfg);
    TrainResult baseline = train_supervised(dataset, model_cfg, sup_cfg);

    EvalAggregates j = eval_both_domains(dataset, model_cfg, joint.best.params, "joint");
    EvalAggregates b = eval_both_domains(dataset, model_cfg, baseline.best.params, "baseline");

    FractionReportRow row;
    row.fraction = fraction;
    row.labeled_slices = joint.labeled_slices_used;
    row.tgt_joint_dice = j.tgt_dice;
    row.tgt_baseline_dice = b.tgt_dice;
    row.src_joint_dice = j.src_dice;
    row.src_baseline_dice = b.src_dice;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace segcl::train
