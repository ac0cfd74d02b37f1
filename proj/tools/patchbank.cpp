// patchbank command-line interface.
//
// Exit codes: 0 success, 1 partial or runtime failure, 2 configuration error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "patchbank/patchbank.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// "1,2,4" or "0..4" (inclusive) or a mix such as "1,5..7".
std::vector<std::uint64_t> parse_int_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    try {
      if (const auto dots = item.find(".."); dots != std::string::npos) {
        const auto lo = std::stoull(item.substr(0, dots));
        const auto hi = std::stoull(item.substr(dots + 2));
        if (hi < lo) throw patchbank::ConfigError("bad range '" + item + "'");
        for (auto v = lo; v <= hi; ++v) out.push_back(v);
      } else {
        out.push_back(std::stoull(item));
      }
    } catch (const std::logic_error&) {
      throw patchbank::ConfigError("cannot parse integer list '" + s + "'");
    }
  }
  return out;
}

// Flags that mirror benchmark config keys. Only flags given on the command
// line are written into the overlay, so they override the config file.
struct ConfigFlags {
  std::string config_path;
  std::string dataset_root, dataset_name, profile, categories, shots, seeds;
  std::string extractor, model, taps, aug_types, coreset_size, pool_padding, out;
  std::size_t input_size = 0, pixel_stride = 0, num_augs = 0, projection_dim = 0, patch_size = 0, aupr_bins = 0,
              jobs = 0, score_jobs = 0;
  std::uint64_t aug_seed = 0;
  double scale = 0.0, sigma = 0.0;

  std::vector<std::pair<CLI::Option*, std::string>> options;

  void add(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file; flags override its keys");
    reg(app->add_option("--dataset-root", dataset_root, "dataset root (MVTec layout)"), "dataset_root");
    reg(app->add_option("--dataset-name", dataset_name, "dataset label in outputs"), "dataset_name");
    reg(app->add_option("--profile", profile, "mvtec or visa"), "profile");
    reg(app->add_option("--categories", categories, "comma-separated category filter"), "categories");
    reg(app->add_option("--shots", shots, "k values, e.g. 1,5,10"), "shots");
    reg(app->add_option("--seeds", seeds, "seeds, e.g. 0..4"), "seeds");
    reg(app->add_option("--extractor", extractor, "onnx or pixels"), "extractor");
    reg(app->add_option("--model", model, "ONNX backbone"), "model");
    reg(app->add_option("--taps", taps, "comma-separated output names, shallow to deep"), "taps");
    reg(app->add_option("--input-size", input_size, "native input side in pixels"), "input_size");
    reg(app->add_option("--scale", scale, "input scale multiplier"), "scale");
    reg(app->add_option("--pixel-stride", pixel_stride, "downsampling of the pixels extractor"), "pixel_stride");
    reg(app->add_option("--num-augs", num_augs, "augmented variants per training image"), "augment.num_augs");
    reg(app->add_option("--aug-types", aug_types, "comma-separated augmentation types"), "augment.types");
    reg(app->add_option("--aug-seed", aug_seed, "augmentation seed"), "augment.seed");
    reg(app->add_option("--coreset-size", coreset_size, "bank size after coreset selection, or 'all'"), "coreset_size");
    reg(app->add_option("--projection-dim", projection_dim, "random projection dim for coreset distances (0 = off)"),
        "projection_dim");
    reg(app->add_option("--patch-size", patch_size, "neighbourhood pooling size"), "patch_size");
    reg(app->add_option("--pool-padding", pool_padding, "zero or replicate"), "pool_padding");
    reg(app->add_option("--sigma", sigma, "anomaly-map smoothing sigma (0 = off)"), "sigma");
    reg(app->add_option("--aupr-bins", aupr_bins, "bin pixel scores for AUPR (0 = exact)"), "aupr_bins");
    reg(app->add_option("--out", out, "output directory"), "out");
    reg(app->add_option("--jobs", jobs, "parallel grid cells"), "jobs");
    reg(app->add_option("--score-jobs", score_jobs, "threads per cell for scoring"), "score_jobs");
  }

  void reg(CLI::Option* opt, std::string key) { options.emplace_back(opt, std::move(key)); }

  json overlay() const {
    json j = json::object();
    for (const auto& [opt, key] : options) {
      if (opt->count() == 0) continue;
      json value;
      if (key == "categories" || key == "taps" || key == "augment.types") value = split_list(opt->as<std::string>());
      else if (key == "shots" || key == "seeds") value = parse_int_list(opt->as<std::string>());
      else if (key == "scale" || key == "sigma") value = opt->as<double>();
      else if (key == "input_size" || key == "pixel_stride" || key == "augment.num_augs" || key == "projection_dim" ||
               key == "patch_size" || key == "aupr_bins" || key == "jobs" || key == "score_jobs" || key == "augment.seed")
        value = opt->as<std::uint64_t>();
      else value = opt->as<std::string>();
      if (key.rfind("augment.", 0) == 0) j["augment"][key.substr(8)] = value;
      else j[key] = value;
    }
    return j;
  }

  json merged() const {
    json base = json::object();
    if (!config_path.empty()) {
      try {
        base = json::parse(patchbank::read_file_bytes(config_path));
      } catch (const json::exception& e) {
        throw patchbank::ConfigError("config file '" + config_path + "': " + e.what());
      }
    }
    base.merge_patch(overlay());
    return base;
  }

  patchbank::BenchmarkConfig config() const { return patchbank::config_from_json(merged()); }
};

void print_metrics(const patchbank::RunMetrics& m) {
  std::cout << patchbank::to_json(m).dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patchbank: few/many-shot patch-memory anomaly detection and benchmarking"};
  app.require_subcommand(1);

  ConfigFlags bench_flags;
  auto* bench = app.add_subcommand("benchmark", "run the (category, k, seed) grid and write runs.csv + summary.json");
  bench_flags.add(bench);

  ConfigFlags extract_flags;
  std::string extract_category, extract_split = "train";
  std::vector<std::string> extract_images;
  auto* extract = app.add_subcommand("extract", "extract feature packs (FPAK) for a category split or image files");
  extract_flags.add(extract);
  extract->add_option("--category", extract_category, "category to extract");
  extract->add_option("--split", extract_split, "train (k-shot sample + augmentations) or test")->check(CLI::IsMember({"train", "test"}));
  extract->add_option("--image", extract_images, "image file(s) to extract instead of a dataset split");

  std::string fit_packs, fit_out, fit_coreset = "all", fit_padding = "zero";
  std::size_t fit_patch = 3, fit_projection = 0, fit_jobs = 1;
  std::uint64_t fit_seed = 0;
  auto* fit = app.add_subcommand("fit", "build a memory bank (PBNK) from training packs");
  fit->add_option("--packs", fit_packs, "directory written by extract --split train")->required();
  fit->add_option("--out", fit_out, "bank file")->required();
  fit->add_option("--coreset-size", fit_coreset, "bank size after coreset selection, or 'all'");
  auto* fit_seed_opt = fit->add_option("--seed", fit_seed, "coreset seed (default: the sampling seed)");
  fit->add_option("--patch-size", fit_patch, "neighbourhood pooling size");
  fit->add_option("--pool-padding", fit_padding, "zero or replicate");
  fit->add_option("--projection-dim", fit_projection, "random projection dim for coreset distances (0 = off)");
  fit->add_option("--jobs", fit_jobs, "threads for coreset selection");

  std::string score_bank, score_packs, score_out;
  double score_sigma = 4.0;
  std::size_t score_jobs = 1;
  bool score_no_png = false;
  auto* score = app.add_subcommand("score", "score test packs against a bank; writes scores.csv and anomaly maps");
  score->add_option("--bank", score_bank, "bank file")->required();
  score->add_option("--packs", score_packs, "directory written by extract --split test")->required();
  score->add_option("--out", score_out, "output directory")->required();
  score->add_option("--sigma", score_sigma, "anomaly-map smoothing sigma (0 = off)");
  score->add_option("--jobs", score_jobs, "scoring threads");
  score->add_flag("--no-png", score_no_png, "skip 16-bit PNG anomaly maps");

  std::string eval_scores, eval_root, eval_profile = "mvtec", eval_category, eval_out, eval_name;
  std::size_t eval_bins = 0;
  auto* evaluate = app.add_subcommand("evaluate", "compute image AUROC, pixel AUPR and HPROC for a scored test split");
  evaluate->add_option("--scores", eval_scores, "directory written by score")->required();
  evaluate->add_option("--dataset-root", eval_root, "dataset root")->required();
  evaluate->add_option("--profile", eval_profile, "mvtec or visa");
  evaluate->add_option("--category", eval_category, "category (default: from scores.json)");
  evaluate->add_option("--dataset-name", eval_name, "dataset label");
  evaluate->add_option("--aupr-bins", eval_bins, "bin pixel scores for AUPR (0 = exact)");
  evaluate->add_option("--out", eval_out, "metrics JSON (default: <scores>/metrics.json)");

  std::string report_metrics, report_out, report_root, report_profile = "mvtec";
  auto* report = app.add_subcommand("report", "curves CSV + SVG plots from a benchmark output directory");
  report->add_option("--metrics", report_metrics, "benchmark output directory containing runs.csv")->required();
  report->add_option("--out", report_out, "report directory (default: <metrics>/report)");
  report->add_option("--dataset-root", report_root, "dataset root, enables the defect-size histogram");
  report->add_option("--profile", report_profile, "mvtec or visa");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (bench->parsed()) {
      const auto cfg = bench_flags.config();
      const auto outcome = patchbank::run_benchmark(cfg, &std::cerr);
      std::cerr << "cells: " << outcome.computed << " computed, " << outcome.cached << " cached, " << outcome.failed
                << " failed\n";
      if (outcome.aggregate) {
        for (const auto& [name, ms] : outcome.aggregate->auhproc)
          std::cout << "AUHPROC[" << name << "] mean=" << patchbank::format_double(ms.mean)
                    << " std=" << patchbank::format_double(ms.std) << '\n';
      } else if (!outcome.aggregate_error.empty()) {
        std::cerr << outcome.aggregate_error << '\n';
      }
      return outcome.failed > 0 ? kExitFailure : kExitOk;
    }

    if (extract->parsed()) {
      json merged = extract_flags.merged();
      if (!extract_images.empty()) {
        const auto spec = patchbank::extractor_from_json(merged);
        std::vector<fs::path> paths(extract_images.begin(), extract_images.end());
        const auto out = merged.value("out", std::string("packs"));
        const auto m = patchbank::stage_extract_images(spec, paths, out);
        std::cerr << "wrote " << m.entries.size() << " packs to " << out << '\n';
        return kExitOk;
      }
      // A single k and seed select the training sample.
      const json shots = merged.value("shots", json::array({1}));
      const json seeds = merged.value("seeds", json::array({0}));
      if (shots.size() != 1 || seeds.size() != 1)
        throw patchbank::ConfigError("extract: give exactly one --shots and one --seeds value");
      merged["shots"] = shots;
      merged["seeds"] = seeds;
      const auto cfg = patchbank::config_from_json(merged);
      if (extract_category.empty()) throw patchbank::ConfigError("extract: --category is required");
      const auto index = patchbank::index_dataset(cfg.dataset_root, cfg.profile, {extract_category});
      const auto m = patchbank::stage_extract(cfg, index, extract_category, extract_split, cfg.shots.front(),
                                              cfg.seeds.front(), cfg.out_dir);
      std::cerr << "wrote " << m.entries.size() << " packs to " << cfg.out_dir.string() << '\n';
      return kExitOk;
    }

    if (fit->parsed()) {
      patchbank::FitSettings s;
      s.patch_size = fit_patch;
      s.padding = patchbank::parse_pool_padding(fit_padding);
      s.coreset_size = patchbank::parse_coreset_size(json(fit_coreset));
      s.projection_dim = fit_projection;
      s.seed = fit_seed;
      s.jobs = fit_jobs;
      const auto bank = patchbank::stage_fit(fit_packs, s, fit_out, fit_seed_opt->count() > 0);
      std::cerr << "bank: " << bank.size() << " points, dim " << bank.dim() << " -> " << fit_out << '\n';
      return kExitOk;
    }

    if (score->parsed()) {
      const auto results = patchbank::stage_score(score_bank, score_packs, score_sigma, score_jobs, score_out, !score_no_png);
      std::cerr << "scored " << results.size() << " images -> " << score_out << '\n';
      return kExitOk;
    }

    if (evaluate->parsed()) {
      const auto index = patchbank::index_dataset(eval_root, patchbank::parse_profile(eval_profile));
      std::string name = eval_name;
      if (name.empty()) {
        patchbank::BenchmarkConfig probe;
        probe.dataset_root = eval_root;
        name = probe.resolved_dataset_name();
      }
      const auto m = patchbank::stage_evaluate(
          eval_scores, index, eval_category.empty() ? std::nullopt : std::optional<std::string>(eval_category),
          eval_bins, name);
      const fs::path out = eval_out.empty() ? fs::path(eval_scores) / "metrics.json" : fs::path(eval_out);
      patchbank::write_file_atomic(out, patchbank::to_json(m).dump(2) + "\n");
      print_metrics(m);
      return kExitOk;
    }

    if (report->parsed()) {
      std::optional<patchbank::DatasetIndex> index;
      if (!report_root.empty()) index = patchbank::index_dataset(report_root, patchbank::parse_profile(report_profile));
      const fs::path out = report_out.empty() ? fs::path(report_metrics) / "report" : fs::path(report_out);
      const auto files = patchbank::write_report(report_metrics, out, index ? &*index : nullptr);
      std::cerr << "report written to " << out.string() << '\n';
      return kExitOk;
    }
  } catch (const patchbank::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const patchbank::IndexingError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const patchbank::InvalidArgument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
