#include "segcl/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace segcl::metrics {

double dice(const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& gt) {
  require(pred.shape == gt.shape, "metrics.shape", "dice operands must share shape");
  std::size_t inter = 0, total = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    require(pred[i] <= 1 && gt[i] <= 1, "metrics.shape", "dice expects binary masks");
    inter += static_cast<std::size_t>(pred[i]) & gt[i];
    total += static_cast<std::size_t>(pred[i]) + gt[i];
  }
  if (total == 0) return 1.0;  // empty-empty convention
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double uvd_um3(const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& gt,
               std::array<double, 2> pixel_spacing_um, double slice_thickness_um) {
  require(pred.shape == gt.shape, "metrics.shape", "uvd operands must share shape");
  require(pixel_spacing_um[0] > 0.0 && pixel_spacing_um[1] > 0.0 && slice_thickness_um > 0.0,
          "metrics.spacing", "spacings must be > 0");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    require(pred[i] <= 1 && gt[i] <= 1, "metrics.shape", "uvd expects binary masks");
    errors += static_cast<std::size_t>(pred[i] != gt[i]);
  }
  return static_cast<double>(errors) * pixel_spacing_um[0] * pixel_spacing_um[1] *
         slice_thickness_um;
}

RelTable relativize(const std::vector<MetricRecord>& records,
                    const std::vector<MetricRecord>& baseline) {
  std::map<std::pair<std::string, std::string>, const MetricRecord*> base_by_cell;
  for (const MetricRecord& b : baseline) base_by_cell[{b.class_name, b.slice_id}] = &b;

  struct Acc {
    std::size_t cells = 0;
    double dice_abs = 0, dice_rel = 0, uvd_abs = 0, uvd_rel = 0;
  };
  std::map<std::string, Acc> per_class;
  Acc all;

  for (const MetricRecord& r : records) {
    auto it = base_by_cell.find({r.class_name, r.slice_id});
    require(it != base_by_cell.end(), "metrics.baseline_missing",
            "baseline lacks cell (class=" + r.class_name + ", slice=" + r.slice_id + ")");
    const MetricRecord& b = *it->second;
    const double dice_abs = 100.0 * r.dice;
    const double dice_rel = 100.0 * (r.dice - b.dice);
    const double uvd_abs = uvd_table_units(r.uvd_um3);
    const double uvd_rel = uvd_table_units(r.uvd_um3 - b.uvd_um3);
    for (Acc* acc : {&per_class[r.class_name], &all}) {
      acc->cells += 1;
      acc->dice_abs += dice_abs;
      acc->dice_rel += dice_rel;
      acc->uvd_abs += uvd_abs;
      acc->uvd_rel += uvd_rel;
    }
  }

  auto finish = [](const std::string& name, const Acc& a) {
    RelRow row;
    row.class_name = name;
    row.cells = a.cells;
    if (a.cells > 0) {
      row.dice_abs = a.dice_abs / a.cells;
      row.dice_rel = a.dice_rel / a.cells;
      row.uvd_abs = a.uvd_abs / a.cells;
      row.uvd_rel = a.uvd_rel / a.cells;
    }
    return row;
  };

  RelTable table;
  for (const auto& [name, acc] : per_class) table.per_class.push_back(finish(name, acc));
  table.all = finish("all", all);
  return table;
}

double mean_dice_percent(const std::vector<MetricRecord>& records) {
  require(!records.empty(), "metrics.empty", "no records to average");
  double s = 0;
  for (const MetricRecord& r : records) s += r.dice;
  return 100.0 * s / static_cast<double>(records.size());
}

double intergrader_fraction(const std::vector<GraderMetric>& method_vs_graders,
                            const std::vector<GraderPairMetric>& grader_vs_grader,
                            bool higher_is_better) {
  std::set<int> graders;
  for (const GraderMetric& g : method_vs_graders) graders.insert(g.grader);
  for (const GraderPairMetric& g : grader_vs_grader) {
    graders.insert(g.grader_a);
    graders.insert(g.grader_b);
  }
  require(graders.size() >= 2, "metrics.graders", "need at least 2 graders");

  using Cell = std::pair<std::string, std::string>;  // (slice, class)
  std::map<Cell, std::vector<double>> method_values, pair_values;
  for (const GraderMetric& g : method_vs_graders)
    method_values[{g.slice_id, g.class_name}].push_back(g.value);
  for (const GraderPairMetric& g : grader_vs_grader)
    pair_values[{g.slice_id, g.class_name}].push_back(g.value);

  std::size_t within = 0, total = 0;
  for (const auto& [cell, mvals] : method_values) {
    auto it = pair_values.find(cell);
    require(it != pair_values.end(), "metrics.graders",
            "grader-vs-grader grid lacks cell (slice=" + cell.first + ", class=" + cell.second +
                ")");
    total += 1;
    bool ok = false;
    for (double m : mvals)
      for (double p : it->second)
        ok = ok || (higher_is_better ? m >= p : m <= p);
    if (ok) within += 1;
  }
  require(total > 0, "metrics.graders", "empty method grid");
  return static_cast<double>(within) / static_cast<double>(total);
}

}  // namespace segcl::metrics
