#pragma once

// Locally aware patch embeddings: per-layer neighbourhood pooling followed by
// resizing deeper taps onto the shallowest tap's grid and concatenating channels.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "patchbank/error.hpp"
#include "patchbank/image_ops.hpp"

namespace patchbank {

// One layer's activations, channel-major and row-major within each channel.
struct FeatureMap {
  std::string layer_name;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  Extent extent() const noexcept { return {height, width}; }

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }

  void validate() const {
    if (channels == 0 || height == 0 || width == 0)
      throw InvalidArgument("feature map '" + layer_name + "' has an empty dimension");
    if (data.size() != channels * height * width)
      throw InvalidArgument("feature map '" + layer_name + "' data length does not match its shape");
    for (float v : data)
      if (!std::isfinite(v)) throw InvalidArgument("feature map '" + layer_name + "' contains non-finite values");
  }
};

// height x width embeddings of length dim, stored position-major: the vector
// for (row, col) is the contiguous slice starting at (row * width + col) * dim.
struct PatchGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t dim = 0;
  std::vector<float> embeddings;
  std::string source_image_id;

  std::size_t size() const noexcept { return height * width; }
  Extent extent() const noexcept { return {height, width}; }

  std::span<const float> embedding(std::size_t row, std::size_t col) const {
    return {embeddings.data() + (row * width + col) * dim, dim};
  }
  std::span<const float> embedding(std::size_t flat_index) const {
    return {embeddings.data() + flat_index * dim, dim};
  }
};

enum class PoolPadding {
  // Zero padding with the full kernel area as divisor (AvgPool2d with count_include_pad).
  zero,
  // Border cells replicated; constant maps stay constant everywhere.
  replicate,
};

inline FeatureMap neighborhood_pool(const FeatureMap& fmap, std::size_t patch_size = 3,
                                    PoolPadding padding = PoolPadding::zero) {
  if (patch_size == 0 || patch_size % 2 == 0)
    throw InvalidArgument("neighborhood_pool: patch_size must be odd and positive, got " +
                          std::to_string(patch_size));
  fmap.validate();
  if (patch_size == 1) return fmap;

  const auto h = static_cast<std::ptrdiff_t>(fmap.height);
  const auto w = static_cast<std::ptrdiff_t>(fmap.width);
  const auto r = static_cast<std::ptrdiff_t>(patch_size / 2);
  const double divisor = static_cast<double>(patch_size * patch_size);

  // Returns the source index for an offset position, or -1 for a zero pad.
  auto source = [&](std::ptrdiff_t i, std::ptrdiff_t n) -> std::ptrdiff_t {
    if (i >= 0 && i < n) return i;
    if (padding == PoolPadding::zero) return -1;
    return i < 0 ? 0 : n - 1;
  };

  FeatureMap out = fmap;
  std::vector<double> rows(fmap.height * fmap.width);
  for (std::size_t c = 0; c < fmap.channels; ++c) {
    const float* plane = fmap.data.data() + c * fmap.height * fmap.width;
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -r; k <= r; ++k) {
          const auto xx = source(x + k, w);
          if (xx >= 0) acc += plane[y * w + xx];
        }
        rows[static_cast<std::size_t>(y * w + x)] = acc;
      }
    }
    float* dst = out.data.data() + c * fmap.height * fmap.width;
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -r; k <= r; ++k) {
          const auto yy = source(y + k, h);
          if (yy >= 0) acc += rows[static_cast<std::size_t>(yy * w + x)];
        }
        dst[y * w + x] = static_cast<float>(acc / divisor);
      }
    }
  }
  return out;
}

inline PatchGrid merge_layers(std::span<const FeatureMap> maps, std::string source_image_id = {}) {
  if (maps.empty()) throw InvalidArgument("merge_layers: no feature maps given");
  const FeatureMap& first = maps.front();
  first.validate();
  std::size_t dim = 0;
  for (const auto& m : maps) {
    m.validate();
    if (m.height > first.height || m.width > first.width)
      throw InvalidArgument("merge_layers: layer '" + m.layer_name +
                            "' is larger than the first layer; order taps shallow to deep");
    dim += m.channels;
  }

  PatchGrid grid;
  grid.height = first.height;
  grid.width = first.width;
  grid.dim = dim;
  grid.source_image_id = std::move(source_image_id);
  grid.embeddings.resize(grid.size() * dim);

  std::size_t offset = 0;
  for (const auto& m : maps) {
    const std::vector<float> resized = resize_bilinear(m.data, m.channels, m.extent(), grid.extent());
    const std::size_t area = grid.size();
    for (std::size_t c = 0; c < m.channels; ++c)
      for (std::size_t p = 0; p < area; ++p) grid.embeddings[p * dim + offset + c] = resized[c * area + p];
    offset += m.channels;
  }
  return grid;
}

// Pools every tap and merges them onto one grid.
inline PatchGrid make_patch_grid(std::span<const FeatureMap> maps, std::size_t patch_size,
                                 std::string source_image_id = {},
                                 PoolPadding padding = PoolPadding::zero) {
  std::vector<FeatureMap> pooled;
  pooled.reserve(maps.size());
  for (const auto& m : maps) pooled.push_back(neighborhood_pool(m, patch_size, padding));
  return merge_layers(pooled, std::move(source_image_id));
}

struct PatchEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  std::span<const float> embedding;
};

// Row-major enumeration; entries view into the grid and must not outlive it.
inline std::vector<PatchEntry> flatten_patches(const PatchGrid& grid) {
  std::vector<PatchEntry> entries;
  entries.reserve(grid.size());
  for (std::size_t r = 0; r < grid.height; ++r)
    for (std::size_t c = 0; c < grid.width; ++c) entries.push_back({r, c, grid.embedding(r, c)});
  return entries;
}

inline PatchGrid assemble_grid(std::span<const PatchEntry> entries, Extent extent,
                               std::string source_image_id = {}) {
  if (entries.size() != extent.area()) throw InvalidArgument("assemble_grid: entry count does not match extent");
  PatchGrid grid;
  grid.height = extent.height;
  grid.width = extent.width;
  grid.dim = entries.empty() ? 0 : entries.front().embedding.size();
  grid.source_image_id = std::move(source_image_id);
  grid.embeddings.resize(grid.size() * grid.dim);
  for (const auto& e : entries) {
    if (e.row >= grid.height || e.col >= grid.width || e.embedding.size() != grid.dim)
      throw InvalidArgument("assemble_grid: entry out of range");
    std::copy(e.embedding.begin(), e.embedding.end(),
              grid.embeddings.begin() + static_cast<std::ptrdiff_t>((e.row * grid.width + e.col) * grid.dim));
  }
  return grid;
}

}  // namespace patchbank
