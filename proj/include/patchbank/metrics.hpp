#pragma once

// Detection and segmentation metrics: image-level AUROC, pixel-level AUPR
// (step-wise average precision), their harmonic mean HPROC, and the normalized
// area under the HPROC-vs-k-shot curve.
//
// F1-max is intentionally absent: with more anomalous than normal test images
// the PR curve it is read from is optimistic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "patchbank/error.hpp"
#include "patchbank/image_ops.hpp"

namespace patchbank {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;  // 1 = anomalous

  void add(double score, bool anomalous) {
    scores.push_back(score);
    labels.push_back(anomalous ? 1 : 0);
  }
};

namespace detail {

inline std::pair<std::size_t, std::size_t> check_scored(std::span<const double> scores,
                                                        std::span<const std::uint8_t> labels, const char* what) {
  if (scores.size() != labels.size()) throw InvalidArgument(std::string(what) + ": scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw InvalidArgument(std::string(what) + ": non-finite score");
    if (labels[i] > 1) throw InvalidArgument(std::string(what) + ": labels must be 0 or 1");
    pos += labels[i];
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0)
    throw UndefinedMetric(std::string(what) + " is undefined without both normal and anomalous samples");
  return {pos, neg};
}

inline std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return order;
}

}  // namespace detail

// Mann-Whitney estimate with midranks: P(s+ > s-) + P(s+ = s-) / 2.
inline double image_auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const auto [pos, neg] = detail::check_scored(scores, labels, "image AUROC");
  const auto order = detail::order_by_score(scores, false);
  // Ranks are 1-based; tied groups share the mean rank. Sums of half-integers
  // are exact in double for any realistic n.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) group_pos += labels[order[j++]];
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    rank_sum += mid_rank * static_cast<double>(group_pos);
    i = j;
  }
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

inline double image_auroc(const ScoredSet& s) { return image_auroc(s.scores, s.labels); }

// AP = sum_n (R_n - R_{n-1}) P_n over descending unique thresholds, no interpolation.
inline double pixel_aupr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const auto [pos, neg] = detail::check_scored(scores, labels, "pixel AUPR");
  const auto order = detail::order_by_score(scores, true);
  std::size_t tp = 0;
  std::size_t fp = 0;
  double prev_recall = 0.0;
  double ap = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      if (labels[order[i]]) ++tp; else ++fp;
      ++i;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

inline double pixel_aupr(const ScoredSet& s) { return pixel_aupr(s.scores, s.labels); }

// Approximate AP over `bins` uniform score bins spanning [min, max]; each bin is
// one threshold. Memory is O(bins) once the histogram is built.
inline double pixel_aupr_binned(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                std::size_t bins = 10000) {
  const auto [pos, neg] = detail::check_scored(scores, labels, "pixel AUPR");
  if (bins == 0) throw InvalidArgument("pixel AUPR: bin count must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  std::vector<std::size_t> pos_hist(bins, 0), neg_hist(bins, 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::size_t b = span > 0.0 ? static_cast<std::size_t>((scores[i] - lo) / span * static_cast<double>(bins)) : 0;
    if (b >= bins) b = bins - 1;
    (labels[i] ? pos_hist : neg_hist)[b]++;
  }
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0, ap = 0.0;
  for (std::size_t b = bins; b-- > 0;) {
    if (pos_hist[b] == 0 && neg_hist[b] == 0) continue;
    tp += pos_hist[b];
    fp += neg_hist[b];
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    ap += (recall - prev_recall) * static_cast<double>(tp) / static_cast<double>(tp + fp);
    prev_recall = recall;
  }
  return ap;
}

// Harmonic mean of two percentages.
inline double hproc(double image_auroc_pct, double pixel_aupr_pct) {
  auto in_range = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 100.0; };
  if (!in_range(image_auroc_pct) || !in_range(pixel_aupr_pct))
    throw InvalidArgument("hproc: inputs must be percentages in [0, 100]");
  const double sum = image_auroc_pct + pixel_aupr_pct;
  if (sum == 0.0) return 0.0;
  return 2.0 * image_auroc_pct * pixel_aupr_pct / sum;
}

struct KShotPoint {
  std::size_t k = 0;
  double hproc = 0.0;
};

class KShotCurve {
 public:
  KShotCurve() = default;
  explicit KShotCurve(std::vector<KShotPoint> points) : points_(std::move(points)) {
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (points_[i].k == 0) throw InvalidArgument("k-shot curve: k must be positive");
      if (i > 0 && points_[i].k <= points_[i - 1].k)
        throw InvalidArgument("k-shot curve: k values must be strictly increasing");
    }
  }

  const std::vector<KShotPoint>& points() const noexcept { return points_; }
  bool empty() const noexcept { return points_.empty(); }

 private:
  std::vector<KShotPoint> points_;
};

// Trapezoidal area over k divided by the k span, so a flat curve returns its value.
inline double auhproc(const KShotCurve& curve) {
  const auto& p = curve.points();
  if (p.empty()) throw InvalidArgument("auhproc: empty curve");
  if (p.size() == 1) return p.front().hproc;
  double area = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i)
    area += 0.5 * (p[i].hproc + p[i - 1].hproc) * static_cast<double>(p[i].k - p[i - 1].k);
  return area / static_cast<double>(p.back().k - p.front().k);
}

// Fraction of positive pixels per mask; masks without defects are skipped.
inline std::vector<double> defect_size_fractions(std::span<const BinaryMask> masks) {
  std::vector<double> out;
  for (const auto& mask : masks) {
    if (mask.values.empty()) continue;
    const auto positive = static_cast<std::size_t>(std::count_if(mask.values.begin(), mask.values.end(),
                                                                 [](std::uint8_t v) { return v != 0; }));
    if (positive > 0) out.push_back(static_cast<double>(positive) / static_cast<double>(mask.values.size()));
  }
  return out;
}

// --- aggregation -----------------------------------------------------------

// Percentages for one (category, k, seed) cell.
struct RunMetrics {
  std::string dataset;
  std::string category;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  double image_auroc = 0.0;
  double pixel_aupr = 0.0;
  double hproc = 0.0;
};

struct Grouping {
  std::vector<std::size_t> shots;
  std::vector<std::uint64_t> seeds;
  // Named subsets of shots that get their own AUHPROC (e.g. few-shot {1,5,10}).
  std::map<std::string, std::vector<std::size_t>> curves;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct ShotSummary {
  std::size_t k = 0;
  double image_auroc = 0.0;
  double pixel_aupr = 0.0;
  double hproc = 0.0;
};

struct CategorySummary {
  std::string category;
  std::vector<ShotSummary> per_shot;  // seed-averaged, in grouping shot order
  std::map<std::string, double> auhproc;
};

struct ShotAggregate {
  std::size_t k = 0;
  MeanStd image_auroc;  // std across categories
  MeanStd pixel_aupr;
  MeanStd hproc;
  // Dataset-level means per seed, then mean/std across seeds.
  MeanStd image_auroc_over_seeds;
  MeanStd pixel_aupr_over_seeds;
  MeanStd hproc_over_seeds;
};

struct AggregateReport {
  std::vector<CategorySummary> categories;  // sorted by name
  std::vector<ShotAggregate> shots;
  std::map<std::string, MeanStd> auhproc;  // across categories
  // Average of the per-shot values, each shot weighted equally.
  MeanStd shot_average_image_auroc_over_seeds;
  double shot_average_image_auroc = 0.0;
  double shot_average_pixel_aupr = 0.0;
  double shot_average_hproc = 0.0;
};

// Mean and sample (n-1) standard deviation; std is 0 for a single value.
inline MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

// Averages seeds per category first, then builds k-shot curves and reports
// mean and sample std across categories. Inputs may arrive in any order.
inline AggregateReport aggregate_report(std::span<const RunMetrics> runs, const Grouping& grouping) {
  if (grouping.shots.empty() || grouping.seeds.empty()) throw InvalidArgument("aggregate_report: empty grouping");
  using Key = std::tuple<std::string, std::size_t, std::uint64_t>;
  std::map<Key, const RunMetrics*> cells;
  std::map<std::string, int> category_set;
  for (const auto& r : runs) {
    if (std::find(grouping.shots.begin(), grouping.shots.end(), r.k) == grouping.shots.end()) continue;
    if (std::find(grouping.seeds.begin(), grouping.seeds.end(), r.seed) == grouping.seeds.end()) continue;
    if (!cells.emplace(Key{r.category, r.k, r.seed}, &r).second)
      throw InvalidArgument("aggregate_report: duplicate cell " + r.category + " k=" + std::to_string(r.k) +
                            " seed=" + std::to_string(r.seed));
    category_set[r.category] = 1;
  }
  if (category_set.empty()) throw IncompleteGrid("aggregate_report: no runs match the grouping");

  std::string gaps;
  for (const auto& [category, _] : category_set)
    for (auto k : grouping.shots)
      for (auto seed : grouping.seeds)
        if (!cells.count(Key{category, k, seed}))
          gaps += "\n  " + category + " k=" + std::to_string(k) + " seed=" + std::to_string(seed);
  if (!gaps.empty()) throw IncompleteGrid("aggregate_report: missing grid cells:" + gaps);

  std::vector<std::size_t> sorted_shots = grouping.shots;
  std::sort(sorted_shots.begin(), sorted_shots.end());
  std::vector<std::uint64_t> sorted_seeds = grouping.seeds;
  std::sort(sorted_seeds.begin(), sorted_seeds.end());
  const auto n_seeds = static_cast<double>(sorted_seeds.size());

  AggregateReport report;
  for (const auto& [category, _] : category_set) {
    CategorySummary cs;
    cs.category = category;
    for (auto k : sorted_shots) {
      ShotSummary s;
      s.k = k;
      for (auto seed : sorted_seeds) {
        const RunMetrics* r = cells.at(Key{category, k, seed});
        s.image_auroc += r->image_auroc;
        s.pixel_aupr += r->pixel_aupr;
        s.hproc += r->hproc;
      }
      s.image_auroc /= n_seeds;
      s.pixel_aupr /= n_seeds;
      s.hproc /= n_seeds;
      cs.per_shot.push_back(s);
    }
    auto curve_for = [&](const std::vector<std::size_t>& ks) {
      std::vector<std::size_t> subset = ks;
      std::sort(subset.begin(), subset.end());
      std::vector<KShotPoint> pts;
      for (auto k : subset)
        for (const auto& s : cs.per_shot)
          if (s.k == k) pts.push_back({k, s.hproc});
      return KShotCurve(std::move(pts));
    };
    cs.auhproc["all"] = auhproc(curve_for(sorted_shots));
    for (const auto& [name, ks] : grouping.curves) {
      const KShotCurve c = curve_for(ks);
      if (c.points().size() == ks.size() && !c.empty()) cs.auhproc[name] = auhproc(c);
    }
    report.categories.push_back(std::move(cs));
  }

  for (std::size_t si = 0; si < sorted_shots.size(); ++si) {
    ShotAggregate agg;
    agg.k = sorted_shots[si];
    std::vector<double> au, ap, hp;
    for (const auto& cs : report.categories) {
      au.push_back(cs.per_shot[si].image_auroc);
      ap.push_back(cs.per_shot[si].pixel_aupr);
      hp.push_back(cs.per_shot[si].hproc);
    }
    agg.image_auroc = mean_std(au);
    agg.pixel_aupr = mean_std(ap);
    agg.hproc = mean_std(hp);
    std::vector<double> au_s, ap_s, hp_s;
    for (auto seed : sorted_seeds) {
      double a = 0.0, b = 0.0, c = 0.0;
      for (const auto& [category, _] : category_set) {
        const RunMetrics* r = cells.at(Key{category, agg.k, seed});
        a += r->image_auroc;
        b += r->pixel_aupr;
        c += r->hproc;
      }
      const auto nc = static_cast<double>(category_set.size());
      au_s.push_back(a / nc);
      ap_s.push_back(b / nc);
      hp_s.push_back(c / nc);
    }
    agg.image_auroc_over_seeds = mean_std(au_s);
    agg.pixel_aupr_over_seeds = mean_std(ap_s);
    agg.hproc_over_seeds = mean_std(hp_s);
    report.shots.push_back(agg);
  }

  std::map<std::string, std::vector<double>> per_curve;
  for (const auto& cs : report.categories)
    for (const auto& [name, v] : cs.auhproc) per_curve[name].push_back(v);
  for (const auto& [name, values] : per_curve) report.auhproc[name] = mean_std(values);

  const auto n_shots = static_cast<double>(report.shots.size());
  double seed_std_sum = 0.0;
  for (const auto& s : report.shots) {
    report.shot_average_image_auroc += s.image_auroc.mean / n_shots;
    report.shot_average_pixel_aupr += s.pixel_aupr.mean / n_shots;
    report.shot_average_hproc += s.hproc.mean / n_shots;
    seed_std_sum += s.image_auroc_over_seeds.std;
  }
  report.shot_average_image_auroc_over_seeds = {report.shot_average_image_auroc, seed_std_sum / n_shots};
  return report;
}

}  // namespace patchbank
