#include "segcl/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace segcl::report {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void row_csv(std::ostringstream& os, const std::string& method, const std::string& domain,
             const metrics::RelRow& row, bool with_rel) {
  os << method << ',' << domain << ',' << row.class_name << ",dice," << num(row.dice_abs) << ','
     << (with_rel ? num(row.dice_rel) : std::string()) << '\n';
  os << method << ',' << domain << ',' << row.class_name << ",uvd," << num(row.uvd_abs) << ','
     << (with_rel ? num(row.uvd_rel) : std::string()) << '\n';
}

std::string cell(double rel, double abs, bool with_rel) {
  std::string s = with_rel ? num(rel) + " (" + num(abs) + ")" : num(abs);
  return s;
}

}  // namespace

std::string eval_csv(const std::string& method, const std::string& domain,
                     const metrics::RelTable& table, bool with_rel) {
  std::ostringstream os;
  os << "method,domain,class,metric,abs,rel\n";
  for (const auto& row : table.per_class) row_csv(os, method, domain, row, with_rel);
  row_csv(os, method, domain, table.all, with_rel);
  return os.str();
}

std::string eval_text(const std::string& method, const std::string& domain,
                      const metrics::RelTable& table, bool with_rel) {
  std::ostringstream os;
  os << "method: " << method << "   domain: " << domain << '\n';
  const char* head = with_rel ? "Dice rel (abs) %        UVD rel (abs) um^3x10^2"
                              : "Dice abs %              UVD abs um^3x10^2";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %-24s %-24s\n", "class", head, "");
  os << buf;
  auto line = [&os, with_rel](const metrics::RelRow& row) {
    char b[160];
    std::string dice = cell(row.dice_rel, row.dice_abs, with_rel);
    std::string uvd = cell(row.uvd_rel, row.uvd_abs, with_rel);
    std::snprintf(b, sizeof(b), "%-12s %-24s %-24s\n", row.class_name.c_str(), dice.c_str(),
                  uvd.c_str());
    os << b;
  };
  for (const auto& row : table.per_class) line(row);
  line(table.all);
  return os.str();
}

std::string grid_csv(const std::vector<MethodSummary>& rows) {
  std::ostringstream os;
  os << "method,tgt_dice_rel,tgt_dice_abs,tgt_uvd_rel,tgt_uvd_abs,"
        "src_dice_rel,src_dice_abs,src_uvd_rel,src_uvd_abs\n";
  for (const auto& r : rows) {
    os << r.method << ',' << num(r.target_all.dice_rel) << ',' << num(r.target_all.dice_abs)
       << ',' << num(r.target_all.uvd_rel) << ',' << num(r.target_all.uvd_abs) << ','
       << num(r.source_all.dice_rel) << ',' << num(r.source_all.dice_abs) << ','
       << num(r.source_all.uvd_rel) << ',' << num(r.source_all.uvd_abs) << '\n';
  }
  return os.str();
}

std::string grid_text(const std::vector<MethodSummary>& rows) {
  std::ostringstream os;
  os << "evaluation across all classes, relative to baseline (rel) and absolute (abs)\n";
  os << "dice in %, uvd in um^3 x 10^2\n\n";
  char buf[240];
  std::snprintf(buf, sizeof(buf), "%-28s | %-22s %-22s | %-22s %-22s\n", "method",
                "tgt dice rel (abs)", "tgt uvd rel (abs)", "src dice rel (abs)",
                "src uvd rel (abs)");
  os << buf;
  os << std::string(124, '-') << '\n';
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-28s | %-22s %-22s | %-22s %-22s\n", r.method.c_str(),
                  cell(r.target_all.dice_rel, r.target_all.dice_abs, true).c_str(),
                  cell(r.target_all.uvd_rel, r.target_all.uvd_abs, true).c_str(),
                  cell(r.source_all.dice_rel, r.source_all.dice_abs, true).c_str(),
                  cell(r.source_all.uvd_rel, r.source_all.uvd_abs, true).c_str());
    os << buf;
  }
  return os.str();
}

std::string lambda_csv(const train::LambdaReport& report) {
  std::ostringstream os;
  os << "lambda,tgt_dice_rel,tgt_dice_abs,tgt_uvd_rel,tgt_uvd_abs,"
        "src_dice_rel,src_dice_abs,src_uvd_rel,src_uvd_abs\n";
  for (const auto& r : report.rows) {
    os << num(r.lambda) << ',' << num(r.tgt_dice_rel) << ',' << num(r.tgt_dice_abs) << ','
       << num(r.tgt_uvd_rel) << ',' << num(r.tgt_uvd_abs) << ',' << num(r.src_dice_rel) << ','
       << num(r.src_dice_abs) << ',' << num(r.src_uvd_rel) << ',' << num(r.src_uvd_abs) << '\n';
  }
  return os.str();
}

std::string lambda_text(const train::LambdaReport& report) {
  std::ostringstream os;
  os << "loss-weight ablation, metrics relative to lambda=" << num(report.reference_lambda)
     << "\n\n";
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-10s | %-12s %-12s | %-12s %-12s\n", "lambda", "tgt dice rel",
                "tgt uvd rel", "src dice rel", "src uvd rel");
  os << buf;
  os << std::string(68, '-') << '\n';
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-10s | %-12s %-12s | %-12s %-12s\n", num(r.lambda).c_str(),
                  num(r.tgt_dice_rel).c_str(), num(r.tgt_uvd_rel).c_str(),
                  num(r.src_dice_rel).c_str(), num(r.src_uvd_rel).c_str());
    os << buf;
  }
  return os.str();
}

std::string fraction_csv(const train::FractionReport& report) {
  std::ostringstream os;
  os << "fraction,labeled_slices,tgt_joint_dice,tgt_baseline_dice,tgt_delta,"
        "src_joint_dice,src_baseline_dice,src_delta\n";
  for (const auto& r : report.rows) {
    os << num(r.fraction) << ',' << r.labeled_slices << ',' << num(r.tgt_joint_dice) << ','
       << num(r.tgt_baseline_dice) << ',' << num(r.tgt_delta()) << ',' << num(r.src_joint_dice)
       << ',' << num(r.src_baseline_dice) << ',' << num(r.src_delta()) << '\n';
  }
  return os.str();
}

std::string fraction_text(const train::FractionReport& report) {
  std::ostringstream os;
  os << "labeled-data ablation: joint model minus baseline, per domain (dice %)\n\n";
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-10s %-14s | %-12s %-12s | %-12s %-12s\n", "fraction",
                "labeled", "tgt joint", "tgt delta", "src joint", "src delta");
  os << buf;
  os << std::string(80, '-') << '\n';
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-10s %-14zu | %-12s %-12s | %-12s %-12s\n",
                  num(r.fraction).c_str(), r.labeled_slices, num(r.tgt_joint_dice).c_str(),
                  num(r.tgt_delta()).c_str(), num(r.src_joint_dice).c_str(),
                  num(r.src_delta()).c_str());
    os << buf;
  }
  return os.str();
}

namespace {

struct SvgCanvas {
  std::ostringstream os;
  int width, height;

  SvgCanvas(int w, int h) : width(w), height(h) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const char* color, double sw = 1.5) {
    os << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
       << "\" stroke=\"" << color << "\" stroke-width=\"" << sw << "\"/>\n";
  }
  void circle(double x, double y, const char* color) {
    os << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\"" << color << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const char* color) {
    os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
       << "\" fill=\"" << color << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 11) {
    os << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
       << "\" font-family=\"sans-serif\">" << s << "</text>\n";
  }
  std::string finish() {
    os << "</svg>\n";
    return os.str();
  }
};

}  // namespace

std::string lambda_svg(const train::LambdaReport& report) {
  const int w = 520, h = 300, ml = 60, mb = 50, mt = 30;
  SvgCanvas svg(w, h);
  svg.text(ml, 18, "relative dice vs loss weight (tgt=blue, src=orange)");
  double lo = 0, hi = 0;
  for (const auto& r : report.rows) {
    lo = std::min({lo, r.tgt_dice_rel, r.src_dice_rel});
    hi = std::max({hi, r.tgt_dice_rel, r.src_dice_rel});
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double plot_w = w - ml - 20, plot_h = h - mt - mb;
  const double n = static_cast<double>(report.rows.size());
  auto ypix = [&](double v) { return mt + plot_h * (1.0 - (v - lo) / (hi - lo)); };
  svg.line(ml, ypix(0), w - 20, ypix(0), "#888", 0.8);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    const double x0 = ml + plot_w * (static_cast<double>(i) + 0.15) / n;
    const double bw = plot_w / n * 0.3;
    svg.rect(x0, std::min(ypix(0.0), ypix(r.tgt_dice_rel)), bw,
             std::abs(ypix(r.tgt_dice_rel) - ypix(0.0)), "#4477cc");
    svg.rect(x0 + bw + 2, std::min(ypix(0.0), ypix(r.src_dice_rel)), bw,
             std::abs(ypix(r.src_dice_rel) - ypix(0.0)), "#ee9933");
    char label[32];
    std::snprintf(label, sizeof(label), "%g", r.lambda);
    svg.text(x0, h - mb + 16, label);
  }
  svg.text(10, mt + plot_h / 2, "dice rel");
  svg.text(w / 2 - 20, h - 12, "lambda");
  return svg.finish();
}

std::string fraction_svg(const train::FractionReport& report) {
  const int w = 520, h = 300, ml = 60, mb = 50, mt = 30;
  SvgCanvas svg(w, h);
  svg.text(ml, 18, "joint minus baseline dice vs labeled fraction (tgt=blue, src=orange)");
  double lo = 0, hi = 0;
  for (const auto& r : report.rows) {
    lo = std::min({lo, r.tgt_delta(), r.src_delta()});
    hi = std::max({hi, r.tgt_delta(), r.src_delta()});
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double plot_w = w - ml - 20, plot_h = h - mt - mb;
  auto xpix = [&](double f) { return ml + plot_w * f; };
  auto ypix = [&](double v) { return mt + plot_h * (1.0 - (v - lo) / (hi - lo)); };
  svg.line(ml, ypix(0), w - 20, ypix(0), "#888", 0.8);
  const char* colors[2] = {"#4477cc", "#ee9933"};
  for (int series = 0; series < 2; ++series) {
    for (std::size_t i = 0; i + 1 < report.rows.size(); ++i) {
      const auto& a = report.rows[i];
      const auto& b = report.rows[i + 1];
      const double va = series == 0 ? a.tgt_delta() : a.src_delta();
      const double vb = series == 0 ? b.tgt_delta() : b.src_delta();
      svg.line(xpix(a.fraction), ypix(va), xpix(b.fraction), ypix(vb), colors[series]);
    }
    for (const auto& r : report.rows) {
      svg.circle(xpix(r.fraction), ypix(series == 0 ? r.tgt_delta() : r.src_delta()),
                 colors[series]);
    }
  }
  for (const auto& r : report.rows) {
    char label[32];
    std::snprintf(label, sizeof(label), "%g", r.fraction);
    svg.text(xpix(r.fraction) - 8, h - mb + 16, label);
  }
  svg.text(10, mt + plot_h / 2, "delta");
  svg.text(w / 2 - 30, h - 12, "labeled fraction");
  return svg.finish();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "io.open", "cannot open for writing: " + path);
  out << content;
  require(out.good(), "io.write", "short write: " + path);
}

}  // namespace segcl::report
