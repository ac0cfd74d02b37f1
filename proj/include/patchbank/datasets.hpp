#pragma once

// Index of MVTec-style trees:
//   <root>/<category>/train/good/*
//   <root>/<category>/test/<defect type>/*          ("good" = normal)
//   <root>/<category>/ground_truth/<defect type>/<stem>_mask.png   (or <stem>.png)
// VisA is read after the usual one-class reorganization into the same layout.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchbank/error.hpp"
#include "patchbank/profile.hpp"
#include "patchbank/rng.hpp"

namespace patchbank {

namespace fs = std::filesystem;

struct TestSample {
  std::string image_id;     // "<defect type>/<stem>"
  std::string defect_type;
  bool anomalous = false;
  fs::path image_path;
  std::optional<fs::path> mask_path;
};

struct CategoryIndex {
  std::string name;
  std::vector<std::string> train_normal;  // sorted, distinct stems
  std::map<std::string, fs::path> train_paths;
  std::vector<TestSample> test;

  const fs::path& train_path(const std::string& id) const {
    const auto it = train_paths.find(id);
    if (it == train_paths.end()) throw InvalidArgument("category '" + name + "' has no training image '" + id + "'");
    return it->second;
  }
};

struct DatasetIndex {
  fs::path root;
  DatasetProfile profile = DatasetProfile::mvtec;
  std::vector<CategoryIndex> categories;

  const CategoryIndex& category(const std::string& name) const {
    for (const auto& c : categories)
      if (c.name == name) return c;
    throw InvalidArgument("dataset has no category '" + name + "'");
  }
};

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff";
}

namespace detail {

inline std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

inline std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) return names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

inline std::optional<fs::path> find_mask(const fs::path& gt_dir, const std::string& stem) {
  for (const char* suffix : {"_mask", ""})
    for (const char* ext : {".png", ".PNG", ".bmp", ".tif", ".tiff"}) {
      fs::path candidate = gt_dir / (stem + suffix + ext);
      if (fs::is_regular_file(candidate)) return candidate;
    }
  return std::nullopt;
}

inline CategoryIndex index_category(const fs::path& dir, const std::string& name) {
  CategoryIndex cat;
  cat.name = name;
  for (const auto& p : sorted_images(dir / "train" / "good")) {
    const std::string id = p.stem().string();
    if (!cat.train_paths.emplace(id, p).second)
      throw IndexingError("duplicate training image id '" + id + "' in " + (dir / "train" / "good").string());
    cat.train_normal.push_back(id);
  }
  std::sort(cat.train_normal.begin(), cat.train_normal.end());
  if (cat.train_normal.empty()) throw IndexingError("category '" + name + "' has no normal training images");

  for (const auto& type : sorted_subdirs(dir / "test")) {
    const bool anomalous = type != "good";
    for (const auto& p : sorted_images(dir / "test" / type)) {
      TestSample s;
      s.defect_type = type;
      s.image_id = type + "/" + p.stem().string();
      s.anomalous = anomalous;
      s.image_path = p;
      if (anomalous) {
        s.mask_path = find_mask(dir / "ground_truth" / type, p.stem().string());
        if (!s.mask_path)
          throw IndexingError("no ground-truth mask for anomalous test image '" + p.string() + "' (looked in " +
                              (dir / "ground_truth" / type).string() + ")");
      }
      cat.test.push_back(std::move(s));
    }
  }
  if (cat.test.empty()) throw IndexingError("category '" + name + "' has no test images");
  return cat;
}

}  // namespace detail

// Every subdirectory containing train/ is a category, unless `only` names a subset.
inline DatasetIndex index_dataset(const fs::path& root, DatasetProfile profile,
                                  const std::vector<std::string>& only = {}) {
  if (!fs::is_directory(root)) throw IndexingError("dataset root '" + root.string() + "' is not a directory");
  DatasetIndex index;
  index.root = root;
  index.profile = profile;
  for (const auto& name : detail::sorted_subdirs(root)) {
    if (!fs::is_directory(root / name / "train")) continue;
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    index.categories.push_back(detail::index_category(root / name, name));
  }
  for (const auto& want : only)
    if (std::none_of(index.categories.begin(), index.categories.end(), [&](const CategoryIndex& c) { return c.name == want; }))
      throw IndexingError("category '" + want + "' not found under '" + root.string() + "'");
  if (index.categories.empty()) throw IndexingError("no categories found under '" + root.string() + "'");
  return index;
}

inline nlohmann::json to_json(const DatasetIndex& index) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : index.categories) {
    nlohmann::json test = nlohmann::json::array();
    for (const auto& t : c.test) {
      nlohmann::json e = {{"id", t.image_id}, {"label", t.anomalous ? 1 : 0}, {"path", t.image_path.string()}};
      e["mask"] = t.mask_path ? nlohmann::json(t.mask_path->string()) : nlohmann::json(nullptr);
      test.push_back(std::move(e));
    }
    cats.push_back({{"name", c.name}, {"train_normal", c.train_normal}, {"test", test}});
  }
  return {{"root", index.root.string()}, {"profile", to_string(index.profile)}, {"categories", cats}};
}

struct KShotSample {
  std::string category;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> image_ids;
};

// Fisher-Yates over the sorted ids with xoshiro256** seeded by
// splitmix64(seed ^ fnv1a64(category)); the first k ids form the sample, so
// samples for growing k with one seed are nested.
inline std::vector<std::string> shuffled_ids(std::vector<std::string> ids, const std::string& category,
                                             std::uint64_t seed) {
  Xoshiro256StarStar rng(seed ^ fnv1a64(category));
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.bounded(i));
    std::swap(ids[i - 1], ids[j]);
  }
  return ids;
}

inline KShotSample sample_kshot(const CategoryIndex& category, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > category.train_normal.size())
    throw InvalidArgument("sample_kshot: k=" + std::to_string(k) + " but category '" + category.name + "' has " +
                          std::to_string(category.train_normal.size()) + " training images");
  auto ids = shuffled_ids(category.train_normal, category.name, seed);
  ids.resize(k);
  return {category.name, k, seed, std::move(ids)};
}

inline KShotSample sample_kshot(const DatasetIndex& index, const std::string& category, std::size_t k,
                                std::uint64_t seed) {
  return sample_kshot(index.category(category), k, seed);
}

}  // namespace patchbank
