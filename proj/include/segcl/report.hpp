#pragma once

#include <string>
#include <vector>

#include "segcl/metrics.hpp"
#include "segcl/trainer.hpp"

namespace segcl::report {

/// One grid method with its all-class summaries per domain.
struct MethodSummary {
  std::string method;
  metrics::RelRow target_all;
  metrics::RelRow source_all;
};

std::string eval_csv(const std::string& method, const std::string& domain,
                     const metrics::RelTable& table, bool with_rel);
std::string eval_text(const std::string& method, const std::string& domain,
                      const metrics::RelTable& table, bool with_rel);

std::string grid_csv(const std::vector<MethodSummary>& rows);
std::string grid_text(const std::vector<MethodSummary>& rows);

std::string lambda_csv(const train::LambdaReport& report);
std::string lambda_text(const train::LambdaReport& report);
std::string fraction_csv(const train::FractionReport& report);
std::string fraction_text(const train::FractionReport& report);

std::string lambda_svg(const train::LambdaReport& report);
std::string fraction_svg(const train::FractionReport& report);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace segcl::report
