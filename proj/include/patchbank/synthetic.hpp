#pragma once

// Generates a small MVTec-layout dataset: noisy plain-texture normals and
// test anomalies in the form of bright squares, with matching masks.

#include <algorithm>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "patchbank/image_io.hpp"
#include "patchbank/rng.hpp"

namespace patchbank {

struct SyntheticOptions {
  std::vector<std::string> categories = {"plain"};
  std::size_t size = 64;
  std::size_t train_images = 10;
  std::size_t test_good = 6;
  std::size_t test_anomalous = 6;
  std::size_t min_square = 10;
  std::size_t max_square = 16;
  std::uint64_t seed = 0;
};

namespace detail {

inline RgbImage plain_texture(std::size_t size, std::array<int, 3> base, Xoshiro256StarStar& rng) {
  RgbImage img(size, size);
  const int jitter = static_cast<int>(rng.bounded(9)) - 4;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const int noise = static_cast<int>(rng.bounded(21)) - 10;
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(base[c] + jitter + noise, 0, 255));
      }
  return img;
}

inline std::string numbered(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(3 - std::min<std::size_t>(3, s.size()), '0') + s;
}

}  // namespace detail

inline void make_synthetic_dataset(const std::filesystem::path& root, const SyntheticOptions& opt = {}) {
  namespace fs = std::filesystem;
  for (std::size_t ci = 0; ci < opt.categories.size(); ++ci) {
    const std::string& name = opt.categories[ci];
    Xoshiro256StarStar rng(derive_seed(opt.seed, fnv1a64(name)));
    const std::array<int, 3> base = {70 + static_cast<int>(rng.bounded(60)), 70 + static_cast<int>(rng.bounded(60)),
                                     70 + static_cast<int>(rng.bounded(60))};
    const fs::path dir = root / name;
    fs::create_directories(dir / "train" / "good");
    fs::create_directories(dir / "test" / "good");
    fs::create_directories(dir / "test" / "square");
    fs::create_directories(dir / "ground_truth" / "square");
    for (std::size_t i = 0; i < opt.train_images; ++i)
      save_rgb(detail::plain_texture(opt.size, base, rng), dir / "train" / "good" / (detail::numbered(i) + ".png"));
    for (std::size_t i = 0; i < opt.test_good; ++i)
      save_rgb(detail::plain_texture(opt.size, base, rng), dir / "test" / "good" / (detail::numbered(i) + ".png"));
    for (std::size_t i = 0; i < opt.test_anomalous; ++i) {
      RgbImage img = detail::plain_texture(opt.size, base, rng);
      const std::size_t side = opt.min_square + rng.bounded(opt.max_square - opt.min_square + 1);
      const std::size_t y0 = rng.bounded(opt.size - side + 1);
      const std::size_t x0 = rng.bounded(opt.size - side + 1);
      BinaryMask mask{{opt.size, opt.size}, std::vector<std::uint8_t>(opt.size * opt.size, 0)};
      for (std::size_t y = y0; y < y0 + side; ++y)
        for (std::size_t x = x0; x < x0 + side; ++x) {
          for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<std::uint8_t>(235 + rng.bounded(21));
          mask.values[y * opt.size + x] = 1;
        }
      save_rgb(img, dir / "test" / "square" / (detail::numbered(i) + ".png"));
      save_mask(mask, dir / "ground_truth" / "square" / (detail::numbered(i) + "_mask.png"));
    }
  }
}

}  // namespace patchbank
