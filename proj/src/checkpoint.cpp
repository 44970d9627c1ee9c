#include "segcl/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "segcl/json_util.hpp"

namespace segcl::ckpt {

namespace {

constexpr const char* kCkptMagic = "SEGCLCKPT1";
constexpr const char* kStateMagic = "SEGCLSTATE1";

nlohmann::json tensor_dir(const train::NamedTensors& tensors) {
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& [key, value] : tensors) {
    dir.push_back({{"key", key}, {"shape", value.shape}});
  }
  return dir;
}

void write_blobs(std::ofstream& out, const train::NamedTensors& tensors) {
  for (const auto& [key, value] : tensors) {
    out.write(reinterpret_cast<const char*>(value.ptr()),
              static_cast<std::streamsize>(value.numel() * sizeof(float)));
  }
}

train::NamedTensors read_blobs(std::ifstream& in, const nlohmann::json& dir,
                               const std::string& path) {
  train::NamedTensors tensors;
  for (const auto& entry : dir) {
    std::string key = entry.at("key").get<std::string>();
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(t.numel() * sizeof(float)),
            "io.truncated", "tensor payload truncated: " + path);
    tensors.emplace_back(std::move(key), std::move(t));
  }
  return tensors;
}

nlohmann::json history_to_json(const std::vector<train::EpochRecord>& history) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : history) {
    arr.push_back({{"epoch", r.epoch},
                   {"loss_total", r.loss_total},
                   {"loss_sup", r.loss_sup},
                   {"loss_con_source", r.loss_con_source},
                   {"loss_con_target", r.loss_con_target},
                   {"val_dice_per_class", r.val_dice_per_class},
                   {"mean_val_dice", r.mean_val_dice}});
  }
  return arr;
}

std::vector<train::EpochRecord> history_from_json(const nlohmann::json& arr) {
  std::vector<train::EpochRecord> history;
  for (const auto& j : arr) {
    train::EpochRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.loss_total = j.at("loss_total").get<double>();
    r.loss_sup = j.at("loss_sup").get<double>();
    r.loss_con_source = j.at("loss_con_source").get<double>();
    r.loss_con_target = j.at("loss_con_target").get<double>();
    r.val_dice_per_class = j.at("val_dice_per_class").get<std::vector<double>>();
    r.mean_val_dice = j.at("mean_val_dice").get<double>();
    history.push_back(std::move(r));
  }
  return history;
}

void atomic_replace(const std::string& tmp, const std::string& path) {
  std::filesystem::rename(tmp, path);
}

}  // namespace

nlohmann::json model_config_to_json(const model::ModelConfig& cfg) {
  return {{"levels", cfg.levels},
          {"base_filters", cfg.base_filters},
          {"norm_groups", cfg.norm_groups},
          {"dropout_p", cfg.dropout_p},
          {"num_classes", cfg.num_classes},
          {"projection_dim", cfg.projection_dim},
          {"head_kind", model::to_string(cfg.head_kind)},
          {"input_size", cfg.input_size},
          {"predictor_hidden", cfg.predictor_hidden}};
}

model::ModelConfig model_config_from_json(const nlohmann::json& j) {
  StrictView v(j, "model");
  model::ModelConfig cfg;
  cfg.levels = v.get<int>("levels");
  cfg.base_filters = v.get<int>("base_filters");
  cfg.norm_groups = v.get<int>("norm_groups");
  cfg.dropout_p = v.get<double>("dropout_p");
  cfg.num_classes = v.get<int>("num_classes");
  cfg.projection_dim = v.get<int>("projection_dim");
  cfg.head_kind = model::head_kind_from_string(v.get<std::string>("head_kind"));
  cfg.input_size = v.get<int>("input_size");
  cfg.predictor_hidden = v.get<int>("predictor_hidden");
  v.finish();
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::string& path, const model::ModelConfig& model_cfg, bool has_head,
                     bool has_predictor, int epoch, std::int64_t step,
                     const std::vector<train::EpochRecord>& history,
                     const train::NamedTensors& params) {
  nlohmann::json manifest{{"magic", kCkptMagic},
                          {"model", model_config_to_json(model_cfg)},
                          {"has_head", has_head},
                          {"has_predictor", has_predictor},
                          {"epoch", epoch},
                          {"step", step},
                          {"metric_history", history_to_json(history)},
                          {"tensors", tensor_dir(params)}};
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), "io.open", "cannot open for writing: " + tmp);
    out << manifest.dump() << '\n';
    write_blobs(out, params);
    require(out.good(), "io.write", "short write: " + tmp);
  }
  atomic_replace(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io.open", "cannot open for reading: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "io.header", "missing manifest: " + path);
  nlohmann::json manifest = nlohmann::json::parse(line, nullptr, false);
  require(!manifest.is_discarded() && manifest.is_object(), "io.header",
          "manifest is not a JSON object: " + path);
  require(manifest.value("magic", "") == kCkptMagic, "io.header", "bad magic: " + path);

  LoadedCheckpoint loaded;
  loaded.model = model_config_from_json(manifest.at("model"));
  loaded.has_head = manifest.at("has_head").get<bool>();
  loaded.has_predictor = manifest.at("has_predictor").get<bool>();
  loaded.epoch = manifest.at("epoch").get<int>();
  loaded.step = manifest.at("step").get<std::int64_t>();
  loaded.history = history_from_json(manifest.at("metric_history"));
  loaded.params = read_blobs(in, manifest.at("tensors"), path);
  in.peek();
  require(in.eof(), "io.truncated", "trailing bytes after payload: " + path);
  return loaded;
}

void save_train_state(const std::string& path, const TrainState& state) {
  nlohmann::json manifest{{"magic", kStateMagic},
                          {"config_fingerprint", state.config_fingerprint},
                          {"epochs_completed", state.epochs_completed},
                          {"global_step", state.global_step},
                          {"best_epoch", state.best_epoch},
                          {"best_val", state.best_val},
                          {"best_mean", state.best_mean},
                          {"metric_history", history_to_json(state.history)},
                          {"params", tensor_dir(state.params)},
                          {"adam_m", tensor_dir(state.adam_m)},
                          {"adam_v", tensor_dir(state.adam_v)},
                          {"best_params", tensor_dir(state.best_params)}};
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), "io.open", "cannot open for writing: " + tmp);
    out << manifest.dump() << '\n';
    write_blobs(out, state.params);
    write_blobs(out, state.adam_m);
    write_blobs(out, state.adam_v);
    write_blobs(out, state.best_params);
    require(out.good(), "io.write", "short write: " + tmp);
  }
  atomic_replace(tmp, path);
}

TrainState load_train_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io.open", "cannot open for reading: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "io.header", "missing manifest: " + path);
  nlohmann::json manifest = nlohmann::json::parse(line, nullptr, false);
  require(!manifest.is_discarded() && manifest.is_object(), "io.header",
          "manifest is not a JSON object: " + path);
  require(manifest.value("magic", "") == kStateMagic, "io.header", "bad magic: " + path);

  TrainState state;
  state.config_fingerprint = manifest.at("config_fingerprint").get<std::string>();
  state.epochs_completed = manifest.at("epochs_completed").get<int>();
  state.global_step = manifest.at("global_step").get<std::int64_t>();
  state.best_epoch = manifest.at("best_epoch").get<int>();
  state.best_val = manifest.at("best_val").get<std::vector<double>>();
  state.best_mean = manifest.at("best_mean").get<double>();
  state.history = history_from_json(manifest.at("metric_history"));
  state.params = read_blobs(in, manifest.at("params"), path);
  state.adam_m = read_blobs(in, manifest.at("adam_m"), path);
  state.adam_v = read_blobs(in, manifest.at("adam_v"), path);
  state.best_params = read_blobs(in, manifest.at("best_params"), path);
  in.peek();
  require(in.eof(), "io.truncated", "trailing bytes after payload: " + path);
  return state;
}

void write_metrics_log(const std::string& path, const std::vector<train::EpochRecord>& history,
                       const std::vector<std::string>& class_names) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    require(out.good(), "io.open", "cannot open for writing: " + tmp);
    for (const auto& r : history) {
      auto line = [&out, &r](const std::string& split, const std::string& cls,
                             const std::string& metric, double value) {
        nlohmann::json j{{"epoch", r.epoch},
                         {"split", split},
                         {"class", cls},
                         {"metric", metric},
                         {"value", value}};
        out << j.dump() << '\n';
      };
      line("train", "all", "loss_total", r.loss_total);
      line("train", "all", "loss_sup", r.loss_sup);
      line("train", "all", "loss_con_source", r.loss_con_source);
      line("train", "all", "loss_con_target", r.loss_con_target);
      for (std::size_t c = 0; c < r.val_dice_per_class.size(); ++c)
        line("val", class_names[c], "dice", r.val_dice_per_class[c]);
      line("val", "all", "dice", r.mean_val_dice);
    }
    require(out.good(), "io.write", "short write: " + tmp);
  }
  atomic_replace(tmp, path);
}

}  // namespace segcl::ckpt
