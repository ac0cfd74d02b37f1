#pragma once

// Staged equivalents of one benchmark cell, communicating through files:
//   extract: images -> FPAK packs + manifest.json
//   fit:     packs -> PBNK bank
//   score:   bank + packs -> scores.csv, anomaly maps (16-bit PNG + raw AMAP)
//   evaluate: scores + ground truth -> metrics.json

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchbank/pipeline.hpp"

namespace patchbank {

inline std::string artifact_stem(const std::string& image_id) {
  std::string out;
  for (char c : image_id) {
    if (c == '/' || c == '\\') out += "__";
    else out.push_back(c);
  }
  return out;
}

struct PackManifestEntry {
  std::string image_id;
  std::string file;
  bool augmented = false;
};

struct PackManifest {
  nlohmann::json fingerprint;
  std::string category;
  std::string split;  // "train", "test" or "images"
  std::optional<std::size_t> k;
  std::optional<std::uint64_t> seed;
  std::vector<PackManifestEntry> entries;
};

inline nlohmann::json to_json(const PackManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) entries.push_back({{"image_id", e.image_id}, {"file", e.file}, {"augmented", e.augmented}});
  return {{"fingerprint", m.fingerprint},
          {"category", m.category},
          {"split", m.split},
          {"k", m.k ? nlohmann::json(*m.k) : nlohmann::json(nullptr)},
          {"seed", m.seed ? nlohmann::json(*m.seed) : nlohmann::json(nullptr)},
          {"entries", entries}};
}

inline PackManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::is_regular_file(path)) throw IoError("no manifest.json in '" + dir.string() + "'");
  try {
    const auto j = nlohmann::json::parse(read_file_bytes(path));
    PackManifest m;
    m.fingerprint = j.at("fingerprint");
    m.category = j.value("category", std::string());
    m.split = j.value("split", std::string());
    if (!j.at("k").is_null()) m.k = j.at("k").get<std::size_t>();
    if (!j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("entries"))
      m.entries.push_back({e.at("image_id").get<std::string>(), e.at("file").get<std::string>(), e.at("augmented").get<bool>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Extracts one category split. The train split holds the k-shot sample for
// `seed` plus its augmented variants, in the same order the benchmark uses.
inline PackManifest stage_extract(const BenchmarkConfig& cfg, const DatasetIndex& index, const std::string& category_name,
                                  const std::string& split, std::size_t k, std::uint64_t seed,
                                  const std::filesystem::path& out_dir) {
  const CategoryIndex& category = index.category(category_name);
  auto extractor = make_extractor(cfg.extractor);
  PackManifest manifest;
  manifest.fingerprint = extractor->fingerprint();
  manifest.category = category.name;
  manifest.split = split;
  std::filesystem::create_directories(out_dir);

  auto emit = [&](const RgbImage& img, const std::string& id, bool augmented) {
    const std::string file = artifact_stem(id) + ".fpak";
    write_pack(extract_pack(*extractor, cfg.extractor, img, id), out_dir / file);
    manifest.entries.push_back({id, file, augmented});
  };

  if (split == "train") {
    const KShotSample sample = sample_kshot(category, k, seed);
    manifest.k = k;
    manifest.seed = seed;
    std::vector<RgbImage> images;
    for (const auto& id : sample.image_ids) images.push_back(load_rgb(category.train_path(id)));
    for (const auto& a : generate_augmented_set(images, sample.image_ids, cell_augment_config(cfg.augment, seed)))
      emit(a.image, a.image_id, a.augmented);
  } else if (split == "test") {
    for (const auto& t : category.test) emit(load_rgb(t.image_path), t.image_id, false);
  } else {
    throw ConfigError("extract: split must be train or test, got '" + split + "'");
  }
  write_file_atomic(out_dir / "manifest.json", to_json(manifest).dump(2) + "\n");
  return manifest;
}

// Extracts arbitrary image files (not tied to a dataset tree).
inline PackManifest stage_extract_images(const ExtractorSpec& spec, const std::vector<std::filesystem::path>& images,
                                         const std::filesystem::path& out_dir) {
  auto extractor = make_extractor(spec);
  PackManifest manifest;
  manifest.fingerprint = extractor->fingerprint();
  manifest.split = "images";
  std::filesystem::create_directories(out_dir);
  for (const auto& path : images) {
    const std::string id = path.stem().string();
    const std::string file = artifact_stem(id) + ".fpak";
    write_pack(extract_pack(*extractor, spec, load_rgb(path), id), out_dir / file);
    manifest.entries.push_back({id, file, false});
  }
  write_file_atomic(out_dir / "manifest.json", to_json(manifest).dump(2) + "\n");
  return manifest;
}

inline std::vector<FeaturePack> load_manifest_packs(const std::filesystem::path& dir, const PackManifest& manifest) {
  std::vector<std::filesystem::path> paths;
  for (const auto& e : manifest.entries) paths.push_back(dir / e.file);
  return read_packs(paths, std::optional<nlohmann::json>(std::in_place, manifest.fingerprint));
}

// Fits a bank on a train pack directory. The coreset seed defaults to the
// manifest's sampling seed, matching the one-shot benchmark.
inline MemoryBank stage_fit(const std::filesystem::path& packs_dir, FitSettings settings,
                            const std::filesystem::path& bank_path, bool seed_given = false) {
  const PackManifest manifest = read_manifest(packs_dir);
  if (!seed_given && manifest.seed) settings.seed = *manifest.seed;
  const auto packs = load_manifest_packs(packs_dir, manifest);
  std::vector<bool> flags;
  for (const auto& e : manifest.entries) flags.push_back(e.augmented);
  MemoryBank bank = fit_bank(packs, flags, settings);
  nlohmann::json attrs = bank.attributes();
  attrs["category"] = manifest.category;
  attrs["k"] = manifest.k ? nlohmann::json(*manifest.k) : nlohmann::json(nullptr);
  attrs["seed"] = manifest.seed ? nlohmann::json(*manifest.seed) : nlohmann::json(nullptr);
  bank = bank.with_attributes(std::move(attrs));
  save_bank(bank, bank_path);
  return bank;
}

// Scores every pack in a directory against a bank.
inline std::vector<AnomalyResult> stage_score(const std::filesystem::path& bank_path,
                                              const std::filesystem::path& packs_dir, double sigma, std::size_t jobs,
                                              const std::filesystem::path& out_dir, bool write_png = true) {
  const MemoryBank bank = load_bank(bank_path);
  const PackManifest manifest = read_manifest(packs_dir);
  if (bank.attributes().contains("fingerprint") && bank.attributes().at("fingerprint") != manifest.fingerprint)
    throw FingerprintMismatch("packs in '" + packs_dir.string() + "' were extracted with " +
                              manifest.fingerprint.dump() + " but the bank was fitted on " +
                              bank.attributes().at("fingerprint").dump());
  const auto packs = load_manifest_packs(packs_dir, manifest);
  std::filesystem::create_directories(out_dir / "maps");
  std::vector<AnomalyResult> results;
  std::string csv = "image_id,image_score\n";
  for (std::size_t i = 0; i < packs.size(); ++i) {
    AnomalyResult r = score_pack(bank, packs[i], sigma, jobs);
    const std::string stem = artifact_stem(r.image_id);
    write_map_raw(r.anomaly_map, r.image_id, out_dir / "maps" / (stem + ".amap"));
    if (write_png) write_map_png16(r.anomaly_map, out_dir / "maps" / (stem + ".png"));
    csv += r.image_id + ',' + format_float(r.image_score) + '\n';
    results.push_back(std::move(r));
  }
  write_file_atomic(out_dir / "scores.csv", csv);
  const auto& a = bank.attributes();
  const nlohmann::json info = {{"category", a.value("category", manifest.category)},
                               {"k", a.value("k", nlohmann::json(nullptr))},
                               {"seed", a.value("seed", nlohmann::json(nullptr))},
                               {"fingerprint", manifest.fingerprint},
                               {"sigma", sigma},
                               {"bank_size", bank.size()}};
  write_file_atomic(out_dir / "scores.json", info.dump(2) + "\n");
  return results;
}

// Computes metrics for a scored test split against the dataset's ground truth.
inline RunMetrics stage_evaluate(const std::filesystem::path& scores_dir, const DatasetIndex& index,
                                 std::optional<std::string> category_name, std::size_t aupr_bins,
                                 const std::string& dataset_name) {
  const auto info = nlohmann::json::parse(read_file_bytes(scores_dir / "scores.json"));
  const std::string name = category_name ? *category_name : info.value("category", std::string());
  const CategoryIndex& category = index.category(name);

  std::map<std::string, float> scores;
  {
    std::istringstream in(read_file_bytes(scores_dir / "scores.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      if (f.size() != 2) throw FormatError("scores.csv: malformed row '" + line + "'");
      scores[f[0]] = std::stof(f[1]);
    }
  }

  MetricAccumulator acc;
  for (const auto& t : category.test) {
    const auto it = scores.find(t.image_id);
    if (it == scores.end()) throw IncompleteGrid("evaluate: no score for test image '" + t.image_id + "'");
    AnomalyResult r;
    r.image_id = t.image_id;
    r.image_score = it->second;
    r.anomaly_map = read_map_raw(scores_dir / "maps" / (artifact_stem(t.image_id) + ".amap"));
    acc.add(r, t.anomalous, mask_for(t, r.anomaly_map.extent));
  }
  RunMetrics m = acc.finish(aupr_bins);
  m.dataset = dataset_name;
  m.category = category.name;
  m.k = info.value("k", nlohmann::json(nullptr)).is_null() ? 0 : info.at("k").get<std::size_t>();
  m.seed = info.value("seed", nlohmann::json(nullptr)).is_null() ? 0 : info.at("seed").get<std::uint64_t>();
  return m;
}

}  // namespace patchbank
