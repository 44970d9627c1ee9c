#include "segcl/config.hpp"

#include <cstdlib>
#include <fstream>

#include "segcl/checkpoint.hpp"
#include "segcl/json_util.hpp"

namespace segcl::cli {

namespace {

phantom::GeometryParams geometry_from(StrictView v) {
  phantom::GeometryParams g;
  g.depth = v.get_or<int>("depth", g.depth);
  g.height = v.get_or<int>("height", g.height);
  g.width = v.get_or<int>("width", g.width);
  g.num_boundaries = v.get_or<int>("num_boundaries", g.num_boundaries);
  g.max_lesions_per_class = v.get_or<int>("max_lesions_per_class", g.max_lesions_per_class);
  g.min_radius_frac = v.get_or<float>("min_radius_frac", g.min_radius_frac);
  g.max_radius_frac = v.get_or<float>("max_radius_frac", g.max_radius_frac);
  g.boundary_amp_frac = v.get_or<float>("boundary_amp_frac", g.boundary_amp_frac);
  g.lesion_warp = v.get_or<float>("lesion_warp", g.lesion_warp);
  v.finish();
  g.validate();
  return g;
}

nlohmann::json geometry_to(const phantom::GeometryParams& g) {
  return {{"depth", g.depth},
          {"height", g.height},
          {"width", g.width},
          {"num_boundaries", g.num_boundaries},
          {"max_lesions_per_class", g.max_lesions_per_class},
          {"min_radius_frac", g.min_radius_frac},
          {"max_radius_frac", g.max_radius_frac},
          {"boundary_amp_frac", g.boundary_amp_frac},
          {"lesion_warp", g.lesion_warp}};
}

phantom::DomainProfile profile_from(StrictView v) {
  phantom::DomainProfile p;
  p.noise_sigma = v.get_or<float>("noise_sigma", p.noise_sigma);
  p.contrast_gamma = v.get_or<float>("contrast_gamma", p.contrast_gamma);
  p.speckle_grain_px = v.get_or<float>("speckle_grain_px", p.speckle_grain_px);
  p.bias_field_amp = v.get_or<float>("bias_field_amp", p.bias_field_amp);
  if (v.has("spacing_um")) {
    auto s = v.get<std::vector<float>>("spacing_um");
    require(s.size() == 3, "config.schema", "spacing_um must have 3 entries");
    p.spacing_um = {s[0], s[1], s[2]};
  }
  v.finish();
  p.validate();
  return p;
}

nlohmann::json profile_to(const phantom::DomainProfile& p) {
  return {{"noise_sigma", p.noise_sigma},
          {"contrast_gamma", p.contrast_gamma},
          {"speckle_grain_px", p.speckle_grain_px},
          {"bias_field_amp", p.bias_field_amp},
          {"spacing_um", std::vector<float>{p.spacing_um[0], p.spacing_um[1], p.spacing_um[2]}}};
}

phantom::StratifyConfig stratify_from(StrictView v) {
  phantom::StratifyConfig s;
  s.src_labeled_train = v.get_or<int>("src_labeled_train", s.src_labeled_train);
  s.src_labeled_val = v.get_or<int>("src_labeled_val", s.src_labeled_val);
  s.src_test = v.get_or<int>("src_test", s.src_test);
  s.tgt_test = v.get_or<int>("tgt_test", s.tgt_test);
  s.tgt_labeled_train = v.get_or<int>("tgt_labeled_train", s.tgt_labeled_train);
  s.tgt_labeled_val = v.get_or<int>("tgt_labeled_val", s.tgt_labeled_val);
  s.slices_per_labeled_volume = v.get_or<int>("slices_per_labeled_volume",
                                              s.slices_per_labeled_volume);
  s.slices_per_test_volume = v.get_or<int>("slices_per_test_volume", s.slices_per_test_volume);
  s.upper_bound = v.get_or<bool>("upper_bound", s.upper_bound);
  v.finish();
  return s;
}

nlohmann::json stratify_to(const phantom::StratifyConfig& s) {
  return {{"src_labeled_train", s.src_labeled_train},
          {"src_labeled_val", s.src_labeled_val},
          {"src_test", s.src_test},
          {"tgt_test", s.tgt_test},
          {"tgt_labeled_train", s.tgt_labeled_train},
          {"tgt_labeled_val", s.tgt_labeled_val},
          {"slices_per_labeled_volume", s.slices_per_labeled_volume},
          {"slices_per_test_volume", s.slices_per_test_volume},
          {"upper_bound", s.upper_bound}};
}

pairgen::AugmConfig augm_from(StrictView v) {
  pairgen::AugmConfig a;
  a.flip_prob = v.get_or<float>("flip_prob", a.flip_prob);
  a.max_translate_frac = v.get_or<float>("max_translate_frac", a.max_translate_frac);
  a.max_zoom_in_frac = v.get_or<float>("max_zoom_in_frac", a.max_zoom_in_frac);
  a.max_brightness_delta = v.get_or<float>("max_brightness_delta", a.max_brightness_delta);
  a.max_jitter = v.get_or<float>("max_jitter", a.max_jitter);
  v.finish();
  a.validate();
  return a;
}

nlohmann::json augm_to(const pairgen::AugmConfig& a) {
  return {{"flip_prob", a.flip_prob},
          {"max_translate_frac", a.max_translate_frac},
          {"max_zoom_in_frac", a.max_zoom_in_frac},
          {"max_brightness_delta", a.max_brightness_delta},
          {"max_jitter", a.max_jitter}};
}

losses::LossConfig loss_from(StrictView v) {
  losses::LossConfig l;
  l.tau = v.get_or<double>("tau", l.tau);
  l.lambda = v.get_or<double>("lambda", l.lambda);
  l.eps = v.get_or<double>("eps", l.eps);
  l.contrastive_kind = losses::contrastive_kind_from_string(
      v.get_or<std::string>("contrastive_kind", losses::to_string(l.contrastive_kind)));
  l.denominator_mode = losses::denominator_mode_from_string(
      v.get_or<std::string>("denominator_mode", losses::to_string(l.denominator_mode)));
  v.finish();
  l.validate();
  return l;
}

nlohmann::json loss_to(const losses::LossConfig& l) {
  return {{"tau", l.tau},
          {"lambda", l.lambda},
          {"eps", l.eps},
          {"contrastive_kind", losses::to_string(l.contrastive_kind)},
          {"denominator_mode", losses::to_string(l.denominator_mode)}};
}

train::TrainConfig train_from(StrictView v, std::uint64_t seed) {
  train::TrainConfig t;
  t.seed = seed;
  t.regime = train::regime_from_string(v.get_or<std::string>("regime", "baseline"));
  t.pair_kind = train::pair_kind_from_string(v.get_or<std::string>("pair_kind", "comb"));
  t.epochs = v.get_or<int>("epochs", t.epochs);
  t.lr = v.get_or<double>("lr", t.lr);
  t.batch_labeled = v.get_or<int>("batch_labeled", t.batch_labeled);
  t.batch_pairs_per_domain = v.get_or<int>("batch_pairs_per_domain", t.batch_pairs_per_domain);
  t.labeled_fraction = v.get_or<double>("labeled_fraction", t.labeled_fraction);
  t.sigma_um = v.get_or<double>("sigma_um", t.sigma_um);
  if (auto loss = v.child_opt("loss")) t.loss = loss_from(*loss);
  if (auto augm = v.child_opt("augm")) t.augm = augm_from(*augm);
  v.finish();
  t.validate();
  return t;
}

nlohmann::json train_to(const train::TrainConfig& t) {
  return {{"regime", train::to_string(t.regime)},
          {"pair_kind", train::to_string(t.pair_kind)},
          {"epochs", t.epochs},
          {"lr", t.lr},
          {"batch_labeled", t.batch_labeled},
          {"batch_pairs_per_domain", t.batch_pairs_per_domain},
          {"labeled_fraction", t.labeled_fraction},
          {"sigma_um", t.sigma_um},
          {"loss", loss_to(t.loss)},
          {"augm", augm_to(t.augm)}};
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  StrictView root(j, "config");
  ExperimentConfig cfg;
  cfg.seed = root.get<std::uint64_t>("seed");
  cfg.output_dir = root.get<std::string>("output_dir");

  StrictView data = root.child("data");
  cfg.data.num_classes = data.get_or<int>("num_classes", cfg.data.num_classes);
  cfg.data.num_source_volumes =
      data.get_or<int>("num_source_volumes", cfg.data.num_source_volumes);
  cfg.data.num_target_volumes =
      data.get_or<int>("num_target_volumes", cfg.data.num_target_volumes);
  if (auto g = data.child_opt("geometry")) cfg.data.geometry = geometry_from(*g);
  if (auto p = data.child_opt("source_profile")) cfg.data.source_profile = profile_from(*p);
  if (auto p = data.child_opt("target_profile")) cfg.data.target_profile = profile_from(*p);
  if (auto s = data.child_opt("stratify")) cfg.data.stratify = stratify_from(*s);
  data.finish();

  if (auto m = root.child_opt("model")) {
    cfg.model = ckpt::model_config_from_json(m->raw());
  }
  if (auto t = root.child_opt("train")) {
    cfg.train = train_from(*t, cfg.seed);
  } else {
    cfg.train.seed = cfg.seed;
  }
  if (auto e = root.child_opt("eval")) {
    cfg.eval.threshold = e->get_or<double>("threshold", cfg.eval.threshold);
    e->finish();
  }
  if (auto a = root.child_opt("ablations")) {
    cfg.ablations.lambdas = a->get_or<std::vector<double>>("lambdas", cfg.ablations.lambdas);
    cfg.ablations.fractions = a->get_or<std::vector<double>>("fractions", cfg.ablations.fractions);
    a->finish();
  }
  root.finish();

  if (const char* env = std::getenv("SEGCL_OUTPUT_DIR")) {
    if (env[0] != '\0') cfg.output_dir = env;
  }

  require(cfg.data.num_classes == cfg.model.num_classes, "config.mismatch",
          "data.num_classes must equal model.num_classes");
  require(cfg.data.geometry.height == cfg.data.geometry.width &&
              cfg.data.geometry.height == cfg.model.input_size,
          "config.mismatch", "model.input_size must match square phantom slices");
  cfg.model.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "io.open", "cannot open config: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  require(!j.is_discarded(), "config.schema", "config is not valid JSON: " + path);
  return config_from_json(j);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  return {{"seed", cfg.seed},
          {"output_dir", cfg.output_dir},
          {"data",
           {{"num_classes", cfg.data.num_classes},
            {"num_source_volumes", cfg.data.num_source_volumes},
            {"num_target_volumes", cfg.data.num_target_volumes},
            {"geometry", geometry_to(cfg.data.geometry)},
            {"source_profile", profile_to(cfg.data.source_profile)},
            {"target_profile", profile_to(cfg.data.target_profile)},
            {"stratify", stratify_to(cfg.data.stratify)}}},
          {"model", ckpt::model_config_to_json(cfg.model)},
          {"train", train_to(cfg.train)},
          {"eval", {{"threshold", cfg.eval.threshold}}},
          {"ablations",
           {{"lambdas", cfg.ablations.lambdas}, {"fractions", cfg.ablations.fractions}}}};
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  nlohmann::json j = config_to_json(cfg);
  j["train"].erase("epochs");
  j.erase("output_dir");
  return j.dump();
}

}  // namespace segcl::cli
