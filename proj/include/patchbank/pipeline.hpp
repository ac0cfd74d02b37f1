#pragma once

// Benchmark grid over (category, k, seed): sample -> augment -> extract ->
// fit (with optional coreset) -> score the test split -> metrics. Cells are
// cached by content hash so interrupted grids resume without recomputation.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchbank/augmentation.hpp"
#include "patchbank/config.hpp"
#include "patchbank/datasets.hpp"
#include "patchbank/error.hpp"
#include "patchbank/feature_extraction.hpp"
#include "patchbank/file_util.hpp"
#include "patchbank/image_io.hpp"
#include "patchbank/memory_bank.hpp"
#include "patchbank/metrics.hpp"
#include "patchbank/parallel.hpp"
#include "patchbank/patch_features.hpp"

namespace patchbank {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

// --- building blocks shared by the one-shot and staged paths ----------------

// Per-run augmentation stream: the configured seed mixed with the run seed.
inline AugmentConfig cell_augment_config(const AugmentConfig& base, std::uint64_t run_seed) {
  AugmentConfig cfg = base;
  cfg.seed = derive_seed(base.seed, run_seed);
  return cfg;
}

struct FitSettings {
  std::size_t patch_size = 3;
  PoolPadding padding = PoolPadding::zero;
  std::optional<std::size_t> coreset_size;
  std::size_t projection_dim = 0;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

// Builds the bank from training packs. A coreset target at or above the
// number of patches keeps the full bank.
inline MemoryBank fit_bank(std::span<const FeaturePack> packs, const std::vector<bool>& augmented,
                           const FitSettings& s) {
  if (packs.empty()) throw InvalidArgument("fit: no training feature packs");
  std::vector<PatchGrid> grids;
  grids.reserve(packs.size());
  for (const auto& p : packs) grids.push_back(make_patch_grid(p.layers, s.patch_size, p.image_id, s.padding));
  MemoryBank bank = build_bank(grids, augmented);
  if (s.coreset_size && *s.coreset_size < bank.size())
    bank = greedy_coreset(bank, *s.coreset_size, s.seed, {s.projection_dim, s.jobs, std::nullopt});
  return bank.with_attributes({{"fingerprint", packs.front().fingerprint},
                               {"patch_size", s.patch_size},
                               {"pool_padding", to_string(s.padding)}});
}

inline AnomalyResult score_pack(const MemoryBank& bank, const FeaturePack& pack, double sigma, std::size_t jobs) {
  const auto& attrs = bank.attributes();
  if (attrs.contains("fingerprint") && attrs.at("fingerprint") != pack.fingerprint)
    throw FingerprintMismatch("feature pack '" + pack.image_id + "' has fingerprint " + pack.fingerprint.dump() +
                              " but the bank was fitted on " + attrs.at("fingerprint").dump());
  const std::size_t patch_size = attrs.value("patch_size", std::size_t{3});
  const PoolPadding padding = parse_pool_padding(attrs.value("pool_padding", std::string("zero")));
  const PatchGrid grid = make_patch_grid(pack.layers, patch_size, pack.image_id, padding);
  return score_image(bank, grid, pack.source_extent, sigma, jobs);
}

struct MetricAccumulator {
  ScoredSet images;
  ScoredSet pixels;

  void add(const AnomalyResult& result, bool anomalous, const BinaryMask& mask) {
    if (mask.extent != result.anomaly_map.extent)
      throw DimensionError("mask for '" + result.image_id + "' does not match the anomaly map size");
    images.add(result.image_score, anomalous);
    pixels.scores.insert(pixels.scores.end(), result.anomaly_map.values.begin(), result.anomaly_map.values.end());
    pixels.labels.insert(pixels.labels.end(), mask.values.begin(), mask.values.end());
  }

  // Percentages: image AUROC over test images, AUPR over the pooled pixels.
  RunMetrics finish(std::size_t aupr_bins) const {
    RunMetrics m;
    m.image_auroc = 100.0 * image_auroc(images);
    m.pixel_aupr = 100.0 * (aupr_bins > 0 ? pixel_aupr_binned(pixels.scores, pixels.labels, aupr_bins) : pixel_aupr(pixels));
    m.hproc = hproc(m.image_auroc, m.pixel_aupr);
    return m;
  }
};

inline BinaryMask mask_for(const TestSample& sample, Extent extent) {
  if (!sample.anomalous) return {extent, std::vector<std::uint8_t>(extent.area(), 0)};
  return load_mask(*sample.mask_path, extent);
}

// --- one cell ---------------------------------------------------------------

struct CellResult {
  std::string category;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string cache_key;
  std::vector<std::string> sampled_ids;
  std::size_t bank_size = 0;
  std::optional<RunMetrics> metrics;
  std::optional<std::string> error;
  bool from_cache = false;
};

inline std::string cell_cache_key(const BenchmarkConfig& cfg, const nlohmann::json& fingerprint,
                                  const CategoryIndex& category, std::size_t k, std::uint64_t seed,
                                  const std::vector<std::string>& sampled_ids) {
  std::vector<std::string> test_ids;
  for (const auto& t : category.test) test_ids.push_back(t.image_id);
  const nlohmann::json subset = {
      {"format", 1},
      {"dataset_root", cfg.dataset_root.lexically_normal().string()},
      {"profile", to_string(cfg.profile)},
      {"category", category.name},
      {"k", k},
      {"seed", seed},
      {"sampled_ids", sampled_ids},
      {"test_ids", test_ids},
      {"fingerprint", fingerprint},
      {"extractor", to_json(cfg.extractor)},
      {"augment", to_json(cfg.augment)},
      {"patch_size", cfg.patch_size},
      {"pool_padding", to_string(cfg.pool_padding)},
      {"coreset_size", cfg.coreset_size ? nlohmann::json(*cfg.coreset_size) : nlohmann::json("all")},
      {"projection_dim", cfg.coreset_projection_dim},
      {"sigma", cfg.sigma},
      {"aupr_bins", cfg.pixel_aupr_bins},
  };
  return hex64(fnv1a64(subset.dump()));
}

inline RunMetrics run_cell(const BenchmarkConfig& cfg, const CategoryIndex& category, const KShotSample& sample,
                           FeatureExtractor& extractor, std::size_t* bank_size = nullptr) {
  std::vector<RgbImage> images;
  for (const auto& id : sample.image_ids) images.push_back(load_rgb(category.train_path(id)));
  const auto augmented = generate_augmented_set(images, sample.image_ids, cell_augment_config(cfg.augment, sample.seed));

  std::vector<FeaturePack> packs;
  std::vector<bool> flags;
  for (const auto& a : augmented) {
    packs.push_back(extract_pack(extractor, cfg.extractor, a.image, a.image_id));
    flags.push_back(a.augmented);
  }
  const MemoryBank bank = fit_bank(packs, flags,
                                   {cfg.patch_size, cfg.pool_padding, cfg.coreset_size, cfg.coreset_projection_dim,
                                    sample.seed, cfg.score_jobs});
  if (bank_size) *bank_size = bank.size();

  MetricAccumulator acc;
  for (const auto& t : category.test) {
    const RgbImage img = load_rgb(t.image_path);
    const FeaturePack pack = extract_pack(extractor, cfg.extractor, img, t.image_id);
    const AnomalyResult r = score_pack(bank, pack, cfg.sigma, cfg.score_jobs);
    acc.add(r, t.anomalous, mask_for(t, img.extent()));
  }
  RunMetrics m = acc.finish(cfg.pixel_aupr_bins);
  m.dataset = cfg.resolved_dataset_name();
  m.category = category.name;
  m.k = sample.k;
  m.seed = sample.seed;
  return m;
}

// --- CSV --------------------------------------------------------------------

inline constexpr std::string_view kRunsCsvHeader = "dataset,category,k,seed,image_auroc,pixel_aupr,hproc";

inline std::string runs_to_csv(std::span<const RunMetrics> runs) {
  std::string out(kRunsCsvHeader);
  out += '\n';
  for (const auto& r : runs)
    out += r.dataset + ',' + r.category + ',' + std::to_string(r.k) + ',' + std::to_string(r.seed) + ',' +
           format_double(r.image_auroc) + ',' + format_double(r.pixel_aupr) + ',' + format_double(r.hproc) + '\n';
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::vector<RunMetrics> runs_from_csv(const std::string& text, const std::string& name = "runs.csv") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kRunsCsvHeader, 0) != 0)
    throw FormatError(name + ": missing or unexpected header");
  std::vector<RunMetrics> runs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw FormatError(name + ": expected 7 columns in '" + line + "'");
    try {
      runs.push_back({f[0], f[1], std::stoull(f[2]), std::stoull(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6])});
    } catch (const std::exception&) {
      throw FormatError(name + ": malformed row '" + line + "'");
    }
  }
  return runs;
}

inline nlohmann::json to_json(const RunMetrics& m) {
  return {{"dataset", m.dataset}, {"category", m.category}, {"k", m.k}, {"seed", m.seed},
          {"image_auroc", m.image_auroc}, {"pixel_aupr", m.pixel_aupr}, {"hproc", m.hproc}};
}

inline RunMetrics run_metrics_from_json(const nlohmann::json& j) {
  return {j.at("dataset").get<std::string>(), j.at("category").get<std::string>(), j.at("k").get<std::size_t>(),
          j.at("seed").get<std::uint64_t>(), j.at("image_auroc").get<double>(), j.at("pixel_aupr").get<double>(),
          j.at("hproc").get<double>()};
}

inline nlohmann::json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

inline nlohmann::json to_json(const AggregateReport& r) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : r.categories) {
    nlohmann::json shots = nlohmann::json::array();
    for (const auto& s : c.per_shot)
      shots.push_back({{"k", s.k}, {"image_auroc", s.image_auroc}, {"pixel_aupr", s.pixel_aupr}, {"hproc", s.hproc}});
    cats.push_back({{"category", c.category}, {"per_shot", shots}, {"auhproc", c.auhproc}});
  }
  nlohmann::json shots = nlohmann::json::array();
  for (const auto& s : r.shots)
    shots.push_back({{"k", s.k},
                     {"image_auroc", to_json(s.image_auroc)},
                     {"pixel_aupr", to_json(s.pixel_aupr)},
                     {"hproc", to_json(s.hproc)},
                     {"image_auroc_over_seeds", to_json(s.image_auroc_over_seeds)},
                     {"pixel_aupr_over_seeds", to_json(s.pixel_aupr_over_seeds)},
                     {"hproc_over_seeds", to_json(s.hproc_over_seeds)}});
  nlohmann::json auh = nlohmann::json::object();
  for (const auto& [name, ms] : r.auhproc) auh[name] = to_json(ms);
  return {{"categories", cats},
          {"shots", shots},
          {"auhproc", auh},
          {"shot_average",
           {{"image_auroc", r.shot_average_image_auroc},
            {"image_auroc_std_over_seeds", r.shot_average_image_auroc_over_seeds.std},
            {"pixel_aupr", r.shot_average_pixel_aupr},
            {"hproc", r.shot_average_hproc}}}};
}

// Few-shot {1,5,10} and many-shot {25,50} curves whenever the grid covers them.
inline Grouping default_grouping(const BenchmarkConfig& cfg) {
  Grouping g{cfg.shots, cfg.seeds, {}};
  auto covers = [&](std::initializer_list<std::size_t> ks) {
    for (auto k : ks)
      if (std::find(cfg.shots.begin(), cfg.shots.end(), k) == cfg.shots.end()) return false;
    return true;
  };
  if (covers({1, 5, 10})) g.curves["few_shot"] = {1, 5, 10};
  if (covers({25, 50})) g.curves["many_shot"] = {25, 50};
  return g;
}

// --- the grid -----------------------------------------------------------------

inline std::filesystem::path cache_directory(const BenchmarkConfig& cfg) {
  if (const char* env = std::getenv("PATCHBANK_CACHE"); env && *env) return env;
  return cfg.out_dir / "cache";
}

struct BenchmarkOutcome {
  std::vector<CellResult> cells;  // grid order: category, k, seed
  std::vector<RunMetrics> runs;   // successful cells, grid order
  std::optional<AggregateReport> aggregate;
  std::string aggregate_error;
  std::size_t computed = 0;
  std::size_t cached = 0;
  std::size_t failed = 0;
};

inline BenchmarkOutcome run_benchmark(const BenchmarkConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const DatasetIndex index = index_dataset(cfg.dataset_root, cfg.profile, cfg.categories);
  // Built up front so configuration problems surface before any cell runs.
  const nlohmann::json fingerprint = make_extractor(cfg.extractor)->fingerprint();
  const auto cache_dir = cache_directory(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  std::filesystem::create_directories(cache_dir);

  BenchmarkOutcome outcome;
  for (const auto& c : index.categories)
    for (auto k : cfg.shots)
      for (auto seed : cfg.seeds) {
        CellResult cell;
        cell.category = c.name;
        cell.k = k;
        cell.seed = seed;
        outcome.cells.push_back(std::move(cell));
      }

  std::mutex log_mutex;
  auto note = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    *log << msg << '\n';
  };

  parallel_chunks(outcome.cells.size(), cfg.jobs, [&](std::size_t begin, std::size_t end) {
    std::unique_ptr<FeatureExtractor> extractor;
    for (std::size_t i = begin; i < end; ++i) {
      CellResult& cell = outcome.cells[i];
      const std::string label = cell.category + " k=" + std::to_string(cell.k) + " seed=" + std::to_string(cell.seed);
      try {
        const CategoryIndex& category = index.category(cell.category);
        const KShotSample sample = sample_kshot(category, cell.k, cell.seed);
        cell.sampled_ids = sample.image_ids;
        cell.cache_key = cell_cache_key(cfg, fingerprint, category, cell.k, cell.seed, sample.image_ids);
        const auto cache_file = cache_dir / (cell.cache_key + ".json");
        if (std::filesystem::is_regular_file(cache_file)) {
          const auto cached = nlohmann::json::parse(read_file_bytes(cache_file));
          cell.metrics = run_metrics_from_json(cached.at("metrics"));
          cell.bank_size = cached.value("bank_size", std::size_t{0});
          cell.from_cache = true;
          note("cached   " + label);
          continue;
        }
        if (!extractor) extractor = make_extractor(cfg.extractor);
        cell.metrics = run_cell(cfg, category, sample, *extractor, &cell.bank_size);
        const nlohmann::json record = {{"cache_key", cell.cache_key},
                                       {"sampled_ids", cell.sampled_ids},
                                       {"bank_size", cell.bank_size},
                                       {"metrics", to_json(*cell.metrics)}};
        write_file_atomic(cache_file, record.dump(2));
        note("computed " + label + " image_auroc=" + format_double(cell.metrics->image_auroc) +
             " pixel_aupr=" + format_double(cell.metrics->pixel_aupr));
      } catch (const std::exception& e) {
        cell.error = e.what();
        note("FAILED   " + label + ": " + e.what());
      }
    }
  });

  for (const auto& cell : outcome.cells) {
    if (cell.error) ++outcome.failed;
    else if (cell.from_cache) ++outcome.cached;
    else ++outcome.computed;
    if (cell.metrics) outcome.runs.push_back(*cell.metrics);
  }
  try {
    if (!outcome.runs.empty()) outcome.aggregate = aggregate_report(outcome.runs, default_grouping(cfg));
  } catch (const Error& e) {
    outcome.aggregate_error = e.what();
  }

  write_file_atomic(cfg.out_dir / "runs.csv", runs_to_csv(outcome.runs));
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : outcome.cells) {
    nlohmann::json j = {{"category", c.category}, {"k", c.k}, {"seed", c.seed}, {"cache_key", c.cache_key},
                        {"sampled_ids", c.sampled_ids}, {"bank_size", c.bank_size},
                        {"status", c.error ? "failed" : "ok"}};
    if (c.error) j["error"] = *c.error;
    cells.push_back(std::move(j));
  }
  nlohmann::json summary = {{"config", to_json(cfg)}, {"cells", cells}, {"failed_cells", outcome.failed}};
  summary["aggregate"] = outcome.aggregate ? to_json(*outcome.aggregate) : nlohmann::json(nullptr);
  if (!outcome.aggregate_error.empty()) summary["aggregate_error"] = outcome.aggregate_error;
  write_file_atomic(cfg.out_dir / "summary.json", summary.dump(2) + "\n");
  return outcome;
}

}  // namespace patchbank
