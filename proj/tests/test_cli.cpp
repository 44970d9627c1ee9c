#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "segcl/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kTool = SEGCL_TOOL_PATH;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

json tiny_config(const std::string& output_dir, std::uint64_t seed = 3) {
  return json{
      {"seed", seed},
      {"output_dir", output_dir},
      {"data",
       {{"num_classes", 2},
        {"num_source_volumes", 6},
        {"num_target_volumes", 5},
        {"geometry", {{"depth", 6}, {"height", 16}, {"width", 16}}},
        {"source_profile", {{"noise_sigma", 0.02}, {"contrast_gamma", 1.0}}},
        {"target_profile",
         {{"noise_sigma", 0.05},
          {"contrast_gamma", 0.6},
          {"spacing_um", {47.2, 2.0, 11.7}}}},
        {"stratify",
         {{"src_labeled_train", 2},
          {"src_labeled_val", 1},
          {"src_test", 1},
          {"tgt_test", 1},
          {"tgt_labeled_train", 2},
          {"tgt_labeled_val", 1},
          {"slices_per_labeled_volume", 2},
          {"slices_per_test_volume", 2}}}}},
      {"model",
       {{"levels", 3},
        {"base_filters", 4},
        {"norm_groups", 4},
        {"dropout_p", 0.5},
        {"num_classes", 2},
        {"projection_dim", 8},
        {"head_kind", "pool"},
        {"input_size", 16},
        {"predictor_hidden", 8}}},
      {"train",
       {{"regime", "baseline"},
        {"pair_kind", "comb"},
        {"epochs", 2},
        {"lr", 0.001},
        {"batch_labeled", 4},
        {"batch_pairs_per_domain", 2},
        {"sigma_um", 250.0}}},
      {"eval", {{"threshold", 0.5}}},
      {"ablations", {{"lambdas", {20.0}}, {"fractions", {1.0}}}}};
}

std::string write_config(const fs::path& dir, const json& cfg, const char* name = "config.json") {
  const std::string path = (dir / name).string();
  std::ofstream out(path);
  out << cfg.dump(2);
  return path;
}

int run_tool(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(kTool) + " " + args + " >" + log.string() + " 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("cli: generate writes a manifest whose partitions match the config") {
  TempDir dir("segcl_cli_gen");
  const std::string cfg = write_config(dir.path, tiny_config(dir.str() + "/out"));
  REQUIRE(run_tool("generate --config " + cfg, dir.path / "log.txt") == 0);

  json manifest = json::parse(slurp(dir.path / "out" / "split.json"));
  CHECK(manifest.at("volumes").size() == 11);
  const auto& split = manifest.at("splits").at("default");
  CHECK(split.at("labeled_train").size() == 4);  // 2 volumes x 2 slices
  CHECK(split.at("labeled_val").size() == 2);
  CHECK(split.at("test_source").size() == 2);
  CHECK(split.at("test_target").size() == 2);
  CHECK(split.at("unlabeled_source").size() == 5);
  CHECK(split.at("unlabeled_target").size() == 4);
}

TEST_CASE("cli: generate twice produces byte-identical artifacts") {
  TempDir dir("segcl_cli_gen2");
  const std::string cfg1 = write_config(dir.path, tiny_config(dir.str() + "/a"), "a.json");
  const std::string cfg2 = write_config(dir.path, tiny_config(dir.str() + "/b"), "b.json");
  REQUIRE(run_tool("generate --config " + cfg1, dir.path / "la.txt") == 0);
  REQUIRE(run_tool("generate --config " + cfg2, dir.path / "lb.txt") == 0);
  CHECK(slurp(dir.path / "a" / "split.json") == slurp(dir.path / "b" / "split.json"));
  for (const auto& entry : fs::directory_iterator(dir.path / "a" / "volumes")) {
    const auto name = entry.path().filename();
    CHECK(slurp(entry.path()) == slurp(dir.path / "b" / "volumes" / name));
  }
}

TEST_CASE("cli: missing required field and unknown key are named in diagnostics") {
  TempDir dir("segcl_cli_badcfg");
  json cfg = tiny_config(dir.str() + "/out");
  cfg.erase("seed");
  const std::string missing = write_config(dir.path, cfg, "missing.json");
  CHECK(run_tool("generate --config " + missing, dir.path / "l1.txt") != 0);
  CHECK(slurp(dir.path / "l1.txt").find("config.seed") != std::string::npos);

  json cfg2 = tiny_config(dir.str() + "/out");
  cfg2["data"]["unexpected_knob"] = 1;
  const std::string unknown = write_config(dir.path, cfg2, "unknown.json");
  CHECK(run_tool("generate --config " + unknown, dir.path / "l2.txt") != 0);
  CHECK(slurp(dir.path / "l2.txt").find("unexpected_knob") != std::string::npos);
}

TEST_CASE("cli: SEGCL_OUTPUT_DIR overrides the configured output directory") {
  TempDir dir("segcl_cli_env");
  const std::string cfg = write_config(dir.path, tiny_config(dir.str() + "/ignored"));
  const std::string cmd = "SEGCL_OUTPUT_DIR=" + dir.str() + "/env_out " + kTool +
                          " generate --config " + cfg + " > " + dir.str() + "/log 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir.path / "env_out" / "split.json"));
  CHECK_FALSE(fs::exists(dir.path / "ignored"));
}

TEST_CASE("cli: baseline training writes checkpoint and metrics log, reruns bit-identical") {
  TempDir dir("segcl_cli_train");
  json base = tiny_config(dir.str() + "/out");
  const std::string cfg = write_config(dir.path, base);
  REQUIRE(run_tool("generate --config " + cfg, dir.path / "lg.txt") == 0);
  REQUIRE(run_tool("train --config " + cfg, dir.path / "lt.txt") == 0);
  REQUIRE(fs::exists(dir.path / "out" / "checkpoint_best.segclckpt"));
  REQUIRE(fs::exists(dir.path / "out" / "metrics.jsonl"));

  // second run into a fresh directory: identical dataset + identical outputs
  json second = tiny_config(dir.str() + "/out2");
  const std::string cfg2 = write_config(dir.path, second, "config2.json");
  REQUIRE(run_tool("generate --config " + cfg2, dir.path / "lg2.txt") == 0);
  REQUIRE(run_tool("train --config " + cfg2, dir.path / "lt2.txt") == 0);
  CHECK(slurp(dir.path / "out" / "checkpoint_best.segclckpt") ==
        slurp(dir.path / "out2" / "checkpoint_best.segclckpt"));
  CHECK(slurp(dir.path / "out" / "metrics.jsonl") == slurp(dir.path / "out2" / "metrics.jsonl"));

  // metrics log lines carry the documented shape
  std::istringstream lines(slurp(dir.path / "out" / "metrics.jsonl"));
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    json j = json::parse(line);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("split"));
    CHECK(j.contains("class"));
    CHECK(j.contains("metric"));
    CHECK(j.contains("value"));
    ++count;
  }
  CHECK(count > 0);
}

TEST_CASE("cli: joint training with clr and one pair per domain is rejected up front") {
  TempDir dir("segcl_cli_reject");
  json cfg = tiny_config(dir.str() + "/out");
  cfg["train"]["regime"] = "joint";
  cfg["train"]["batch_pairs_per_domain"] = 1;
  const std::string path = write_config(dir.path, cfg);
  CHECK(run_tool("train --config " + path, dir.path / "log.txt") != 0);
  CHECK(slurp(dir.path / "log.txt").find("batch_pairs_per_domain") != std::string::npos);
}

TEST_CASE("cli: eval against itself as baseline yields zero rel columns") {
  TempDir dir("segcl_cli_eval");
  json cfg = tiny_config(dir.str() + "/out");
  const std::string path = write_config(dir.path, cfg);
  REQUIRE(run_tool("generate --config " + path, dir.path / "lg.txt") == 0);
  REQUIRE(run_tool("train --config " + path, dir.path / "lt.txt") == 0);
  const std::string ckpt = dir.str() + "/out/checkpoint_best.segclckpt";
  REQUIRE(run_tool("eval --config " + path + " --checkpoint " + ckpt + " --baseline " + ckpt +
                       " --split target",
                   dir.path / "le.txt") == 0);

  const std::string csv = slurp(dir.path / "out" / "eval_target.csv");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);  // header
  CHECK(line == "method,domain,class,metric,abs,rel");
  int rows = 0;
  while (std::getline(lines, line)) {
    CHECK(line.substr(line.rfind(',') + 1) == "0.0000");
    ++rows;
  }
  CHECK(rows == (2 + 1) * 2);  // (classes + all) x (dice, uvd)

  // the printed table carries the same numbers as the CSV
  const std::string txt = slurp(dir.path / "out" / "eval_target.txt");
  CHECK(txt.find("0.0000") != std::string::npos);
}

TEST_CASE("cli: eval without baseline leaves rel columns empty") {
  TempDir dir("segcl_cli_eval2");
  json cfg = tiny_config(dir.str() + "/out");
  const std::string path = write_config(dir.path, cfg);
  REQUIRE(run_tool("generate --config " + path, dir.path / "lg.txt") == 0);
  REQUIRE(run_tool("train --config " + path, dir.path / "lt.txt") == 0);
  const std::string ckpt = dir.str() + "/out/checkpoint_best.segclckpt";
  REQUIRE(run_tool("eval --config " + path + " --checkpoint " + ckpt + " --split source",
                   dir.path / "le.txt") == 0);
  std::istringstream lines(slurp(dir.path / "out" / "eval_source.csv"));
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) CHECK(line.back() == ',');
}

TEST_CASE("cli: resumed training reproduces the uninterrupted artifacts byte for byte") {
  TempDir dir("segcl_cli_resume");
  // uninterrupted reference: 4 epochs
  json full = tiny_config(dir.str() + "/ref");
  full["train"]["epochs"] = 4;
  const std::string ref_cfg = write_config(dir.path, full, "ref.json");
  REQUIRE(run_tool("generate --config " + ref_cfg, dir.path / "g1.txt") == 0);
  REQUIRE(run_tool("train --config " + ref_cfg, dir.path / "t1.txt") == 0);

  // interrupted run: 2 epochs, then resume with the 4-epoch config
  json part = tiny_config(dir.str() + "/run");
  part["train"]["epochs"] = 2;
  const std::string part_cfg = write_config(dir.path, part, "part.json");
  REQUIRE(run_tool("generate --config " + part_cfg, dir.path / "g2.txt") == 0);
  REQUIRE(run_tool("train --config " + part_cfg, dir.path / "t2.txt") == 0);
  json cont = tiny_config(dir.str() + "/run");
  cont["train"]["epochs"] = 4;
  const std::string cont_cfg = write_config(dir.path, cont, "cont.json");
  REQUIRE(run_tool("train --config " + cont_cfg + " --resume", dir.path / "t3.txt") == 0);

  CHECK(slurp(dir.path / "ref" / "checkpoint_best.segclckpt") ==
        slurp(dir.path / "run" / "checkpoint_best.segclckpt"));
  CHECK(slurp(dir.path / "ref" / "metrics.jsonl") == slurp(dir.path / "run" / "metrics.jsonl"));
}

TEST_CASE("cli: reproduce emits one grid row per method with baseline rel zero") {
  TempDir dir("segcl_cli_repro");
  json cfg = tiny_config(dir.str() + "/out");
  cfg["train"]["epochs"] = 1;
  const std::string path = write_config(dir.path, cfg);
  REQUIRE(run_tool("generate --config " + path, dir.path / "lg.txt") == 0);
  REQUIRE(run_tool("reproduce --config " + path, dir.path / "lr.txt") == 0);

  std::istringstream lines(slurp(dir.path / "out" / "grid_report.csv"));
  std::string line;
  std::getline(lines, line);  // header
  int rows = 0;
  bool baseline_zero = false;
  while (std::getline(lines, line)) {
    if (line.rfind("baseline,", 0) == 0) {
      baseline_zero = line.find(",0.0000,") != std::string::npos;
    }
    ++rows;
  }
  CHECK(rows == 9);
  CHECK(baseline_zero);
}

TEST_CASE("cli: lambda ablation over {20} emits the zero reference row and plot") {
  TempDir dir("segcl_cli_lam");
  json cfg = tiny_config(dir.str() + "/out");
  cfg["train"]["epochs"] = 1;
  cfg["train"]["regime"] = "joint";
  const std::string path = write_config(dir.path, cfg);
  REQUIRE(run_tool("generate --config " + path, dir.path / "lg.txt") == 0);
  REQUIRE(run_tool("ablate-lambda --config " + path + " --plots", dir.path / "ll.txt") == 0);
  const std::string csv = slurp(dir.path / "out" / "lambda_ablation.csv");
  CHECK(csv.find("20.0000,0.0000,") != std::string::npos);
  CHECK(fs::exists(dir.path / "out" / "lambda_ablation.svg"));
}

TEST_CASE("cli: fraction ablation emits one row per fraction") {
  TempDir dir("segcl_cli_frac");
  json cfg = tiny_config(dir.str() + "/out");
  cfg["train"]["epochs"] = 1;
  cfg["train"]["regime"] = "joint";
  cfg["ablations"]["fractions"] = {0.5, 1.0};
  const std::string path = write_config(dir.path, cfg);
  REQUIRE(run_tool("generate --config " + path, dir.path / "lg.txt") == 0);
  REQUIRE(run_tool("ablate-fraction --config " + path, dir.path / "lf.txt") == 0);
  std::istringstream lines(slurp(dir.path / "out" / "fraction_ablation.csv"));
  std::string line;
  int rows = -1;  // header
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 2);
}
