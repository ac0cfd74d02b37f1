#pragma once

// Benchmark configuration. The JSON keys mirror the CLI flags (dashes become
// underscores); augmentation settings live under "augment".

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchbank/augmentation.hpp"
#include "patchbank/error.hpp"
#include "patchbank/feature_extraction.hpp"
#include "patchbank/patch_features.hpp"
#include "patchbank/profile.hpp"

namespace patchbank {

struct BenchmarkConfig {
  std::filesystem::path dataset_root;
  std::string dataset_name;  // defaults to the root directory name
  DatasetProfile profile = DatasetProfile::mvtec;
  std::vector<std::string> categories;  // empty = all
  std::vector<std::size_t> shots = {1, 5, 10};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  ExtractorSpec extractor;
  AugmentConfig augment;
  std::size_t patch_size = 3;
  PoolPadding pool_padding = PoolPadding::zero;
  std::optional<std::size_t> coreset_size;  // nullopt = keep every patch
  std::size_t coreset_projection_dim = 0;
  double sigma = 4.0;
  std::size_t pixel_aupr_bins = 0;  // 0 = exact
  std::filesystem::path out_dir = "patchbank-out";
  std::size_t jobs = 1;
  std::size_t score_jobs = 1;

  std::string resolved_dataset_name() const {
    if (!dataset_name.empty()) return dataset_name;
    auto p = dataset_root.lexically_normal();
    if (!p.has_filename()) p = p.parent_path();
    return p.filename().string();
  }

  void validate() const {
    if (dataset_root.empty()) throw ConfigError("config: dataset_root is required");
    if (shots.empty()) throw ConfigError("config: shots must not be empty");
    for (std::size_t i = 0; i < shots.size(); ++i) {
      if (shots[i] == 0) throw ConfigError("config: shots must be positive");
      if (i > 0 && shots[i] <= shots[i - 1]) throw ConfigError("config: shots must be strictly increasing");
    }
    if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
    for (std::size_t i = 0; i < seeds.size(); ++i)
      for (std::size_t j = i + 1; j < seeds.size(); ++j)
        if (seeds[i] == seeds[j]) throw ConfigError("config: seeds must be distinct");
    if (patch_size == 0 || patch_size % 2 == 0) throw ConfigError("config: patch_size must be odd");
    if (coreset_size && *coreset_size == 0) throw ConfigError("config: coreset_size must be positive or \"all\"");
    if (sigma < 0.0) throw ConfigError("config: sigma must be non-negative");
    if (jobs == 0 || score_jobs == 0) throw ConfigError("config: jobs must be positive");
    try {
      extractor.validate();
      augment.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
};

inline std::string to_string(PoolPadding p) { return p == PoolPadding::zero ? "zero" : "replicate"; }

inline PoolPadding parse_pool_padding(const std::string& s) {
  if (s == "zero") return PoolPadding::zero;
  if (s == "replicate") return PoolPadding::replicate;
  throw ConfigError("config: pool_padding must be zero or replicate, got '" + s + "'");
}

inline nlohmann::json to_json(const ExtractorSpec& e) {
  return {{"extractor", e.kind == ExtractorKind::onnx ? "onnx" : "pixels"},
          {"model", e.model_path.string()},
          {"taps", e.taps},
          {"input_size", e.native_input_size},
          {"scale", e.scale},
          {"mean", e.mean},
          {"std", e.std},
          {"pixel_stride", e.pixel_stride}};
}

inline nlohmann::json to_json(const BenchmarkConfig& c) {
  nlohmann::json j = to_json(c.extractor);
  j["dataset_root"] = c.dataset_root.string();
  j["dataset_name"] = c.resolved_dataset_name();
  j["profile"] = to_string(c.profile);
  j["categories"] = c.categories;
  j["shots"] = c.shots;
  j["seeds"] = c.seeds;
  j["augment"] = to_json(c.augment);
  j["patch_size"] = c.patch_size;
  j["pool_padding"] = to_string(c.pool_padding);
  j["coreset_size"] = c.coreset_size ? nlohmann::json(*c.coreset_size) : nlohmann::json("all");
  j["projection_dim"] = c.coreset_projection_dim;
  j["sigma"] = c.sigma;
  j["aupr_bins"] = c.pixel_aupr_bins;
  j["out"] = c.out_dir.string();
  j["jobs"] = c.jobs;
  j["score_jobs"] = c.score_jobs;
  return j;
}

inline ExtractorSpec extractor_from_json(const nlohmann::json& j) {
  ExtractorSpec e;
  const std::string kind = j.value("extractor", std::string("onnx"));
  if (kind == "onnx") e.kind = ExtractorKind::onnx;
  else if (kind == "pixels") e.kind = ExtractorKind::pixels;
  else throw ConfigError("config: extractor must be onnx or pixels, got '" + kind + "'");
  e.model_path = j.value("model", std::string());
  e.taps = j.value("taps", std::vector<std::string>{});
  e.native_input_size = j.value("input_size", e.native_input_size);
  e.scale = j.value("scale", e.scale);
  if (j.contains("mean")) e.mean = j.at("mean").get<std::array<double, 3>>();
  if (j.contains("std")) e.std = j.at("std").get<std::array<double, 3>>();
  e.pixel_stride = j.value("pixel_stride", e.pixel_stride);
  return e;
}

inline std::optional<std::size_t> parse_coreset_size(const nlohmann::json& v) {
  if (v.is_null()) return std::nullopt;
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "all") return std::nullopt;
    try {
      std::size_t used = 0;
      const auto n = std::stoull(s, &used);
      if (used == s.size()) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw ConfigError("config: coreset_size must be a count or \"all\", got '" + s + "'");
  }
  return v.get<std::size_t>();
}

inline BenchmarkConfig config_from_json(const nlohmann::json& j) {
  try {
    BenchmarkConfig c;
    c.dataset_root = j.value("dataset_root", std::string());
    c.dataset_name = j.value("dataset_name", std::string());
    c.profile = parse_profile(j.value("profile", std::string("mvtec")));
    c.categories = j.value("categories", std::vector<std::string>{});
    c.shots = j.value("shots", c.shots);
    c.seeds = j.value("seeds", c.seeds);
    c.extractor = extractor_from_json(j);
    c.augment = augment_config_from_json(j.value("augment", nlohmann::json::object()), c.profile);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.pool_padding = parse_pool_padding(j.value("pool_padding", std::string("zero")));
    if (j.contains("coreset_size")) c.coreset_size = parse_coreset_size(j.at("coreset_size"));
    c.coreset_projection_dim = j.value("projection_dim", c.coreset_projection_dim);
    c.sigma = j.value("sigma", c.sigma);
    c.pixel_aupr_bins = j.value("aupr_bins", c.pixel_aupr_bins);
    c.out_dir = j.value("out", c.out_dir.string());
    c.jobs = j.value("jobs", c.jobs);
    c.score_jobs = j.value("score_jobs", c.score_jobs);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace patchbank
