#pragma once

// Normality memory bank: every patch embedding of the normal training images,
// optionally reduced by greedy (farthest-point) coreset selection, queried by
// exact 1-nearest-neighbour Euclidean distance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchbank/binary_container.hpp"
#include "patchbank/error.hpp"
#include "patchbank/file_util.hpp"
#include "patchbank/image_ops.hpp"
#include "patchbank/parallel.hpp"
#include "patchbank/patch_features.hpp"
#include "patchbank/rng.hpp"

namespace patchbank {

// One source grid contributing to the bank.
struct BankImage {
  std::string image_id;
  bool augmented = false;
  std::size_t height = 0;
  std::size_t width = 0;

  friend bool operator==(const BankImage&, const BankImage&) = default;
};

struct PointProvenance {
  std::size_t image = 0;  // index into MemoryBank::images()
  std::size_t row = 0;
  std::size_t col = 0;

  friend bool operator==(const PointProvenance&, const PointProvenance&) = default;
};

struct CoresetMeta {
  std::size_t target_size = 0;
  std::uint64_t seed = 0;
  std::size_t source_count = 0;
  std::size_t projection_dim = 0;  // 0 when selection used the raw embeddings
  std::vector<std::size_t> selected_indices;  // in selection order, into the source bank

  friend bool operator==(const CoresetMeta&, const CoresetMeta&) = default;
};

class MemoryBank {
 public:
  MemoryBank() = default;

  MemoryBank(std::size_t dim, std::vector<float> points, std::vector<BankImage> images,
             std::vector<PointProvenance> provenance, std::optional<CoresetMeta> coreset = std::nullopt,
             nlohmann::json attributes = nlohmann::json::object())
      : dim_(dim),
        points_(std::move(points)),
        images_(std::move(images)),
        provenance_(std::move(provenance)),
        coreset_(std::move(coreset)),
        attributes_(std::move(attributes)) {
    if (dim_ == 0) throw InvalidArgument("memory bank: dim must be positive");
    if (points_.size() % dim_ != 0) throw InvalidArgument("memory bank: point buffer not a multiple of dim");
    if (provenance_.size() != size()) throw InvalidArgument("memory bank: provenance count mismatch");
    for (const auto& p : provenance_)
      if (p.image >= images_.size()) throw InvalidArgument("memory bank: provenance image out of range");
    for (float v : points_)
      if (!std::isfinite(v)) throw InvalidArgument("memory bank: non-finite embedding");
    if (coreset_) {
      if (coreset_->selected_indices.size() != coreset_->target_size || coreset_->target_size != size())
        throw InvalidArgument("memory bank: coreset metadata does not match point count");
      std::vector<std::size_t> sorted = coreset_->selected_indices;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw InvalidArgument("memory bank: coreset indices are not distinct");
      if (!sorted.empty() && sorted.back() >= coreset_->source_count)
        throw InvalidArgument("memory bank: coreset index out of range");
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : points_.size() / dim_; }
  bool empty() const noexcept { return size() == 0; }

  std::span<const float> point(std::size_t i) const { return {points_.data() + i * dim_, dim_}; }
  std::span<const float> points() const noexcept { return points_; }
  const std::vector<BankImage>& images() const noexcept { return images_; }
  const std::vector<PointProvenance>& provenance() const noexcept { return provenance_; }
  const std::optional<CoresetMeta>& coreset() const noexcept { return coreset_; }

  // Free-form metadata carried through save/load (extractor fingerprint, patch size, ...).
  const nlohmann::json& attributes() const noexcept { return attributes_; }
  MemoryBank with_attributes(nlohmann::json attributes) const {
    MemoryBank copy = *this;
    copy.attributes_ = std::move(attributes);
    return copy;
  }

  friend bool operator==(const MemoryBank&, const MemoryBank&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> points_;
  std::vector<BankImage> images_;
  std::vector<PointProvenance> provenance_;
  std::optional<CoresetMeta> coreset_;
  nlohmann::json attributes_ = nlohmann::json::object();
};

// Builds the bank from grids in input order, row-major per grid.
inline MemoryBank build_bank(std::span<const PatchGrid> grids, const std::vector<bool>& augmented = {}) {
  if (grids.empty()) throw InvalidArgument("build_bank: no patch grids given");
  if (!augmented.empty() && augmented.size() != grids.size())
    throw InvalidArgument("build_bank: augmented flags do not match grid count");
  const std::size_t dim = grids.front().dim;
  std::size_t total = 0;
  for (const auto& g : grids) {
    if (g.dim != dim)
      throw InvalidArgument("build_bank: grid '" + g.source_image_id + "' has dim " + std::to_string(g.dim) +
                            ", expected " + std::to_string(dim));
    if (g.embeddings.size() != g.size() * g.dim)
      throw InvalidArgument("build_bank: grid '" + g.source_image_id + "' is malformed");
    total += g.size();
  }
  std::vector<float> points;
  points.reserve(total * dim);
  std::vector<BankImage> images;
  std::vector<PointProvenance> provenance;
  provenance.reserve(total);
  for (std::size_t gi = 0; gi < grids.size(); ++gi) {
    const auto& g = grids[gi];
    images.push_back({g.source_image_id, !augmented.empty() && augmented[gi], g.height, g.width});
    points.insert(points.end(), g.embeddings.begin(), g.embeddings.end());
    for (std::size_t r = 0; r < g.height; ++r)
      for (std::size_t c = 0; c < g.width; ++c) provenance.push_back({gi, r, c});
  }
  return MemoryBank(dim, std::move(points), std::move(images), std::move(provenance));
}

// --- distances -------------------------------------------------------------

// Squared L2 accumulated sequentially in double; used where the result must be
// reproducible by an independent scalar reference (coreset selection).
inline double squared_l2_exact(std::span<const float> a, std::span<const float> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

// Squared L2 with eight fixed float lanes; deterministic and vectorizable.
inline float squared_l2(const float* a, const float* b, std::size_t n) noexcept {
  float lanes[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) {
      const float d = a[i + l] - b[i + l];
      lanes[l] += d * d;
    }
  float tail = 0.0f;
  for (; i < n; ++i) {
    const float d = a[i] - b[i];
    tail += d * d;
  }
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail;
}

inline float nn_distance(const MemoryBank& bank, std::span<const float> query) {
  if (bank.empty()) throw InvalidState("nn_distance: memory bank is empty");
  if (query.size() != bank.dim())
    throw InvalidArgument("nn_distance: query dim " + std::to_string(query.size()) + " does not match bank dim " +
                          std::to_string(bank.dim()));
  const float* base = bank.points().data();
  const std::size_t dim = bank.dim();
  float best = std::numeric_limits<float>::infinity();
  for (std::size_t i = 0, n = bank.size(); i < n; ++i) best = std::min(best, squared_l2(query.data(), base + i * dim, dim));
  return std::sqrt(best);
}

// --- coreset ---------------------------------------------------------------

struct ProjectedPoints {
  std::size_t dim = 0;
  std::vector<float> values;  // count x dim, row-major

  std::span<const float> point(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

// Row-major d_star x dim Gaussian matrix with N(0, 1/d_star) entries.
inline std::vector<float> projection_matrix(std::size_t dim, std::size_t d_star, std::uint64_t seed) {
  Xoshiro256StarStar rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_star));
  std::vector<float> m(d_star * dim);
  for (auto& v : m) v = static_cast<float>(rng.normal() * scale);
  return m;
}

// Random projection used only to speed up coreset distance computations.
inline ProjectedPoints project_for_coreset(const MemoryBank& bank, std::size_t d_star, std::uint64_t seed,
                                           bool identity = false) {
  if (d_star == 0 || d_star > bank.dim())
    throw InvalidArgument("project_for_coreset: d_star must be in [1, " + std::to_string(bank.dim()) + "]");
  ProjectedPoints out;
  out.dim = d_star;
  if (identity) {
    if (d_star != bank.dim()) throw InvalidArgument("project_for_coreset: identity projection needs d_star == dim");
    out.values.assign(bank.points().begin(), bank.points().end());
    return out;
  }
  const auto m = projection_matrix(bank.dim(), d_star, seed);
  out.values.resize(bank.size() * d_star);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto p = bank.point(i);
    for (std::size_t r = 0; r < d_star; ++r) {
      const float* row = m.data() + r * bank.dim();
      double acc = 0.0;
      for (std::size_t c = 0; c < bank.dim(); ++c) acc += static_cast<double>(row[c]) * p[c];
      out.values[i * d_star + r] = static_cast<float>(acc);
    }
  }
  return out;
}

struct CoresetOptions {
  std::size_t projection_dim = 0;          // 0 disables the random projection
  std::size_t jobs = 1;
  std::optional<std::size_t> start_index;  // overrides the seeded first pick
};

// Restricts a bank to the given point indices (in the given order).
inline MemoryBank select_points(const MemoryBank& bank, std::span<const std::size_t> indices,
                                std::optional<CoresetMeta> meta) {
  std::vector<float> points;
  points.reserve(indices.size() * bank.dim());
  std::vector<PointProvenance> provenance;
  provenance.reserve(indices.size());
  for (std::size_t idx : indices) {
    const auto p = bank.point(idx);
    points.insert(points.end(), p.begin(), p.end());
    provenance.push_back(bank.provenance()[idx]);
  }
  return MemoryBank(bank.dim(), std::move(points), bank.images(), std::move(provenance), std::move(meta),
                    bank.attributes());
}

// Farthest-point sampling. The first point is drawn from the seeded generator;
// each further point maximizes the distance to its nearest selected point, ties
// going to the lowest bank index.
inline MemoryBank greedy_coreset(const MemoryBank& bank, std::size_t target_size, std::uint64_t seed,
                                 const CoresetOptions& options = {}) {
  const std::size_t n = bank.size();
  if (target_size == 0) throw InvalidArgument("greedy_coreset: target_size must be positive");
  if (target_size > n)
    throw InvalidArgument("greedy_coreset: target_size " + std::to_string(target_size) + " exceeds bank size " +
                          std::to_string(n));

  std::optional<ProjectedPoints> projected;
  if (options.projection_dim > 0) projected = project_for_coreset(bank, options.projection_dim, seed);
  auto view = [&](std::size_t i) { return projected ? projected->point(i) : bank.point(i); };

  Xoshiro256StarStar rng(seed);
  std::size_t current = options.start_index ? *options.start_index : static_cast<std::size_t>(rng.bounded(n));
  if (current >= n) throw InvalidArgument("greedy_coreset: start index out of range");

  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::vector<std::size_t> selected;
  selected.reserve(target_size);

  const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
  const std::size_t chunk = (n + jobs - 1) / jobs;
  const std::size_t num_chunks = (n + chunk - 1) / chunk;
  struct Best {
    double value = -1.0;
    std::size_t index = 0;
  };
  std::vector<Best> partial(num_chunks);

  for (;;) {
    selected.push_back(current);
    taken[current] = 1;
    if (selected.size() == target_size) break;
    const auto anchor = view(current);
    parallel_for(num_chunks, jobs, [&](std::size_t ci) {
      Best best;
      for (std::size_t i = ci * chunk, end = std::min(n, (ci + 1) * chunk); i < end; ++i) {
        if (taken[i]) continue;
        nearest[i] = std::min(nearest[i], squared_l2_exact(view(i), anchor));
        if (nearest[i] > best.value) best = {nearest[i], i};
      }
      partial[ci] = best;
    });
    // Chunks are visited in index order with a strict comparison, so the
    // winner is the lowest index among the maxima whatever the partitioning.
    Best best;
    for (const auto& b : partial)
      if (b.value > best.value) best = b;
    current = best.index;
  }

  CoresetMeta meta{target_size, seed, n, options.projection_dim, selected};
  return select_points(bank, selected, std::move(meta));
}

// --- scoring ---------------------------------------------------------------

struct ScoreMap {
  Extent extent;
  std::vector<float> values;

  float at(std::size_t y, std::size_t x) const { return values[y * extent.width + x]; }
};

struct AnomalyResult {
  std::string image_id;
  float image_score = 0.0f;
  ScoreMap patch_scores;
  ScoreMap anomaly_map;
};

// Raw per-patch 1-NN distances of a grid against the bank.
inline ScoreMap patch_scores(const MemoryBank& bank, const PatchGrid& grid, std::size_t jobs = 1) {
  if (grid.dim != bank.dim())
    throw InvalidArgument("score_image: grid dim " + std::to_string(grid.dim) + " does not match bank dim " +
                          std::to_string(bank.dim()));
  if (bank.empty()) throw InvalidState("score_image: memory bank is empty");
  ScoreMap scores{grid.extent(), std::vector<float>(grid.size())};
  parallel_for(grid.size(), jobs, [&](std::size_t p) { scores.values[p] = nn_distance(bank, grid.embedding(p)); });
  return scores;
}

// Upsamples patch scores to the image size and smooths them; image score is
// the maximum raw patch score, so smoothing only affects segmentation.
inline AnomalyResult anomaly_from_patch_scores(std::string image_id, ScoreMap scores, Extent target,
                                               double smoothing_sigma) {
  AnomalyResult result;
  result.image_id = std::move(image_id);
  result.image_score = scores.values.empty() ? 0.0f : *std::max_element(scores.values.begin(), scores.values.end());
  result.anomaly_map.extent = target;
  result.anomaly_map.values = resize_bilinear(scores.values, 1, scores.extent, target);
  gaussian_smooth(result.anomaly_map.values, target, smoothing_sigma);
  result.patch_scores = std::move(scores);
  return result;
}

inline AnomalyResult score_image(const MemoryBank& bank, const PatchGrid& grid, Extent target_hw,
                                 double smoothing_sigma, std::size_t jobs = 1) {
  if (target_hw.area() == 0) throw InvalidArgument("score_image: empty target size");
  return anomaly_from_patch_scores(grid.source_image_id, patch_scores(bank, grid, jobs), target_hw, smoothing_sigma);
}

// --- persistence -----------------------------------------------------------

inline constexpr std::string_view kBankMagic = "PBNK";

inline std::string encode_bank(const MemoryBank& bank) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& img : bank.images())
    images.push_back({{"id", img.image_id}, {"augmented", img.augmented}, {"height", img.height}, {"width", img.width}});
  nlohmann::json header = {
      {"dim", bank.dim()},
      {"count", bank.size()},
      {"provenance", {{"images", images}, {"augmented_images", std::count_if(bank.images().begin(), bank.images().end(), [](const BankImage& i) { return i.augmented; })}}},
      {"coreset_meta", nullptr},
      {"attributes", bank.attributes()},
  };
  if (const auto& c = bank.coreset()) {
    header["coreset_meta"] = {{"target_size", c->target_size},
                              {"seed", c->seed},
                              {"source_count", c->source_count},
                              {"projection_dim", c->projection_dim},
                              {"selected_indices", c->selected_indices}};
  }
  return encode_container(kBankMagic, header, bank.points());
}

inline MemoryBank decode_bank(std::string_view bytes, const std::string& name = "bank") {
  Container c = decode_container(bytes, kBankMagic, name);
  try {
    const auto& h = c.header;
    const auto dim = h.at("dim").get<std::size_t>();
    const auto count = h.at("count").get<std::size_t>();
    if (dim == 0 || c.payload.size() != dim * count)
      throw FormatError(name + ": payload holds " + std::to_string(c.payload.size()) + " floats, header implies " +
                        std::to_string(dim * count));
    std::vector<BankImage> images;
    for (const auto& img : h.at("provenance").at("images"))
      images.push_back({img.at("id").get<std::string>(), img.at("augmented").get<bool>(),
                        img.at("height").get<std::size_t>(), img.at("width").get<std::size_t>()});

    // Per-point provenance is implied by image order (row-major per grid) and
    // the coreset selection, so only the summary is stored.
    std::vector<PointProvenance> full;
    for (std::size_t i = 0; i < images.size(); ++i)
      for (std::size_t r = 0; r < images[i].height; ++r)
        for (std::size_t col = 0; col < images[i].width; ++col) full.push_back({i, r, col});

    std::optional<CoresetMeta> meta;
    std::vector<PointProvenance> provenance;
    if (!h.at("coreset_meta").is_null()) {
      const auto& m = h.at("coreset_meta");
      meta = CoresetMeta{m.at("target_size").get<std::size_t>(), m.at("seed").get<std::uint64_t>(),
                         m.at("source_count").get<std::size_t>(), m.at("projection_dim").get<std::size_t>(),
                         m.at("selected_indices").get<std::vector<std::size_t>>()};
      if (meta->source_count != full.size()) throw FormatError(name + ": coreset source count mismatch");
      for (std::size_t idx : meta->selected_indices) {
        if (idx >= full.size()) throw FormatError(name + ": coreset index out of range");
        provenance.push_back(full[idx]);
      }
    } else {
      provenance = std::move(full);
    }
    if (provenance.size() != count) throw FormatError(name + ": provenance does not cover every point");
    return MemoryBank(dim, std::move(c.payload), std::move(images), std::move(provenance), std::move(meta),
                      h.value("attributes", nlohmann::json::object()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": malformed header: " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(name + ": " + e.what());
  }
}

inline void save_bank(const MemoryBank& bank, const std::filesystem::path& path) {
  write_file_atomic(path, encode_bank(bank));
}

inline MemoryBank load_bank(const std::filesystem::path& path) {
  return decode_bank(read_file_bytes(path), path.string());
}

}  // namespace patchbank
