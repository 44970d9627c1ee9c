#pragma once

#include <array>
#include <string>
#include <vector>

#include "segcl/phantom.hpp"
#include "segcl/tensor.hpp"

namespace segcl::metrics {

/// One per-slice, per-class measurement with provenance.
struct MetricRecord {
  std::string method;
  phantom::DomainTag domain = phantom::DomainTag::source;
  std::string class_name;
  std::string slice_id;
  double dice = 0.0;     // [0,1]
  double uvd_um3 = 0.0;  // >= 0
};

/// 2|a.b| / (|a|+|b|); both masks empty counts as perfect agreement (1).
double dice(const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& gt);

/// Physical volume of segmentation error: (#FP + #FN) * row * col * thickness.
double uvd_um3(const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& gt,
               std::array<double, 2> pixel_spacing_um, double slice_thickness_um);

/// Table display unit for UVD.
inline double uvd_table_units(double v_um3) { return v_um3 / 100.0; }

struct RelRow {
  std::string class_name;  // "all" for the grand mean
  std::size_t cells = 0;
  double dice_abs = 0.0;  // percent
  double dice_rel = 0.0;
  double uvd_abs = 0.0;  // um^3 x 10^2
  double uvd_rel = 0.0;
};

struct RelTable {
  std::vector<RelRow> per_class;
  RelRow all;
};

/// Per-cell (class, slice) baseline-relative differences, then per-class and
/// flat all-cell means. Dice reported in percent, UVD in table units.
RelTable relativize(const std::vector<MetricRecord>& records,
                    const std::vector<MetricRecord>& baseline);

/// Flat mean Dice over all (slice, class) cells, in percent.
double mean_dice_percent(const std::vector<MetricRecord>& records);

struct GraderMetric {
  std::string slice_id;
  std::string class_name;
  int grader = 0;
  double value = 0.0;
};

struct GraderPairMetric {
  std::string slice_id;
  std::string class_name;
  int grader_a = 0;
  int grader_b = 0;
  double value = 0.0;
};

/// Fraction of (slice, class) cells where the method's metric against some
/// grader is at least as good as some grader-vs-grader value for that cell.
/// Ties count as within variability.
double intergrader_fraction(const std::vector<GraderMetric>& method_vs_graders,
                            const std::vector<GraderPairMetric>& grader_vs_grader,
                            bool higher_is_better);

}  // namespace segcl::metrics
