#pragma once

// Curve tables and static SVG plots from a benchmark output directory.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "patchbank/datasets.hpp"
#include "patchbank/image_io.hpp"
#include "patchbank/metrics.hpp"
#include "patchbank/pipeline.hpp"

namespace patchbank {

struct CurvePoint {
  std::size_t k = 0;
  double image_auroc = 0.0;
  double pixel_aupr = 0.0;
  double hproc = 0.0;
};

struct CategoryCurve {
  std::string category;
  std::vector<CurvePoint> points;  // ascending k, seed-averaged
  double auhproc = 0.0;
};

inline constexpr std::string_view kAggregateLabel = "ALL";

// Works on partial grids: each (category, k) averages whatever seeds exist.
// The aggregate curve averages category means per k.
inline std::vector<CategoryCurve> build_curves(std::span<const RunMetrics> runs) {
  struct Sums {
    double auroc = 0, aupr = 0, hproc = 0;
    std::size_t n = 0;
  };
  std::map<std::string, std::map<std::size_t, Sums>> grid;
  for (const auto& r : runs) {
    auto& s = grid[r.category][r.k];
    s.auroc += r.image_auroc;
    s.aupr += r.pixel_aupr;
    s.hproc += r.hproc;
    ++s.n;
  }
  std::vector<CategoryCurve> curves;
  std::map<std::size_t, Sums> overall;
  for (const auto& [category, per_k] : grid) {
    CategoryCurve c{category, {}, 0.0};
    std::vector<KShotPoint> pts;
    for (const auto& [k, s] : per_k) {
      const auto n = static_cast<double>(s.n);
      CurvePoint p{k, s.auroc / n, s.aupr / n, s.hproc / n};
      c.points.push_back(p);
      pts.push_back({k, p.hproc});
      auto& o = overall[k];
      o.auroc += p.image_auroc;
      o.aupr += p.pixel_aupr;
      o.hproc += p.hproc;
      ++o.n;
    }
    c.auhproc = auhproc(KShotCurve(std::move(pts)));
    curves.push_back(std::move(c));
  }
  if (!overall.empty()) {
    CategoryCurve all{std::string(kAggregateLabel), {}, 0.0};
    std::vector<KShotPoint> pts;
    for (const auto& [k, s] : overall) {
      const auto n = static_cast<double>(s.n);
      all.points.push_back({k, s.auroc / n, s.aupr / n, s.hproc / n});
      pts.push_back({k, s.hproc / n});
    }
    all.auhproc = auhproc(KShotCurve(std::move(pts)));
    curves.push_back(std::move(all));
  }
  return curves;
}

inline std::string curves_to_csv(std::span<const CategoryCurve> curves) {
  std::string out = "category,k,image_auroc,pixel_aupr,hproc,auhproc\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      out += c.category + ',' + std::to_string(p.k) + ',' + format_double(p.image_auroc) + ',' +
             format_double(p.pixel_aupr) + ',' + format_double(p.hproc) + ',' + format_double(c.auhproc) + '\n';
  return out;
}

// Line plot of one metric vs k, one polyline per curve, y axis fixed to [0, 100].
inline std::string curves_to_svg(std::span<const CategoryCurve> curves, double CurvePoint::*metric,
                                 const std::string& title) {
  constexpr double W = 640, H = 420, L = 60, R = 150, T = 40, B = 50;
  std::size_t kmin = SIZE_MAX, kmax = 0;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      kmin = std::min(kmin, p.k);
      kmax = std::max(kmax, p.k);
    }
  if (kmin == SIZE_MAX) kmin = kmax = 1;
  const double kspan = kmax > kmin ? static_cast<double>(kmax - kmin) : 1.0;
  auto px = [&](std::size_t k) { return L + (static_cast<double>(k - kmin) / kspan) * (W - L - R); };
  auto py = [&](double v) { return T + (1.0 - std::clamp(v, 0.0, 100.0) / 100.0) * (H - T - B); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
                    "\" viewBox=\"0 0 " + num(W) + " " + num(H) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(L) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" + title + "</text>\n";
  svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - B) +
         "\" stroke=\"black\"/>\n";
  for (int v = 0; v <= 100; v += 20)
    svg += "<text x=\"" + num(L - 8) + "\" y=\"" + num(py(v) + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" + std::to_string(v) + "</text>\n";
  std::vector<std::size_t> ticks;
  for (const auto& c : curves)
    for (const auto& p : c.points) ticks.push_back(p.k);
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (auto k : ticks)
    svg += "<text x=\"" + num(px(k)) + "\" y=\"" + num(H - B + 18) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" + std::to_string(k) + "</text>\n";
  svg += "<text x=\"" + num((L + W - R) / 2) + "\" y=\"" + num(H - 12) +
         "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">k-shot</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const bool aggregate = c.category == kAggregateLabel;
    const std::string color = aggregate ? "black" : palette[i % 10];
    std::string pts;
    for (const auto& p : c.points) pts += (pts.empty() ? "" : " ") + num(px(p.k)) + "," + num(py(p.*metric));
    svg += "<polyline data-category=\"" + c.category + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" +
           (aggregate ? "3" : "1.5") + "\" points=\"" + pts + "\"/>\n";
    svg += "<text x=\"" + num(W - R + 10) + "\" y=\"" + num(T + 14.0 * static_cast<double>(i)) +
           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + color + "\">" + c.category + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

// Log-spaced histogram of defect-size fractions between 1e-5 and 1.
inline std::vector<std::size_t> defect_size_histogram(std::span<const double> fractions, std::size_t bins = 20) {
  std::vector<std::size_t> counts(bins, 0);
  for (double f : fractions) {
    const double t = (std::log10(std::max(f, 1e-5)) + 5.0) / 5.0;
    const auto b = std::min(bins - 1, static_cast<std::size_t>(t * static_cast<double>(bins)));
    ++counts[b];
  }
  return counts;
}

struct ReportFiles {
  std::filesystem::path curves_csv;
  std::filesystem::path hproc_svg;
  std::filesystem::path auroc_svg;
  std::optional<std::filesystem::path> defect_sizes_csv;
};

inline ReportFiles write_report(const std::filesystem::path& metrics_dir, const std::filesystem::path& out_dir,
                                const DatasetIndex* dataset = nullptr) {
  const auto runs_path = metrics_dir / "runs.csv";
  if (!std::filesystem::is_regular_file(runs_path))
    throw IoError("report: no runs.csv in '" + metrics_dir.string() + "'");
  const auto runs = runs_from_csv(read_file_bytes(runs_path), runs_path.string());
  if (runs.empty()) throw InvalidArgument("report: '" + runs_path.string() + "' has no runs");
  const auto curves = build_curves(runs);

  ReportFiles files{out_dir / "curves.csv", out_dir / "hproc_vs_k.svg", out_dir / "image_auroc_vs_k.svg", std::nullopt};
  write_file_atomic(files.curves_csv, curves_to_csv(curves));
  write_file_atomic(files.hproc_svg, curves_to_svg(curves, &CurvePoint::hproc, "HPROC vs k-shot"));
  write_file_atomic(files.auroc_svg, curves_to_svg(curves, &CurvePoint::image_auroc, "image AUROC vs k-shot"));

  if (dataset) {
    std::string raw = "category,image_id,fraction\n";
    std::string hist = "category,bin_lo,bin_hi,count\n";
    for (const auto& c : dataset->categories) {
      std::vector<BinaryMask> masks;
      std::vector<std::string> ids;
      for (const auto& t : c.test) {
        if (!t.mask_path) continue;
        const RgbImage img = load_rgb(t.image_path);
        masks.push_back(load_mask(*t.mask_path, img.extent()));
        ids.push_back(t.image_id);
      }
      for (std::size_t i = 0; i < masks.size(); ++i) {
        const auto f = defect_size_fractions(std::span<const BinaryMask>(&masks[i], 1));
        if (!f.empty()) raw += c.name + ',' + ids[i] + ',' + format_double(f.front()) + '\n';
      }
      const auto fractions = defect_size_fractions(masks);
      const auto counts = defect_size_histogram(fractions);
      for (std::size_t b = 0; b < counts.size(); ++b) {
        const double lo = std::pow(10.0, -5.0 + 5.0 * static_cast<double>(b) / static_cast<double>(counts.size()));
        const double hi = std::pow(10.0, -5.0 + 5.0 * static_cast<double>(b + 1) / static_cast<double>(counts.size()));
        hist += c.name + ',' + format_double(lo) + ',' + format_double(hi) + ',' + std::to_string(counts[b]) + '\n';
      }
    }
    files.defect_sizes_csv = out_dir / "defect_sizes.csv";
    write_file_atomic(*files.defect_sizes_csv, raw);
    write_file_atomic(out_dir / "defect_size_histogram.csv", hist);
  }
  return files;
}

}  // namespace patchbank
