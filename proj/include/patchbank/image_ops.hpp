#pragma once

// Planar (channel-major, row-major within channel) float raster helpers shared
// by feature merging, preprocessing and anomaly-map post-processing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "patchbank/error.hpp"

namespace patchbank {

struct Extent {
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t area() const noexcept { return height * width; }
  friend bool operator==(const Extent&, const Extent&) = default;
};

// 8-bit RGB raster, interleaved, row-major.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

  Extent extent() const noexcept { return {height, width}; }
  bool empty() const noexcept { return width == 0 || height == 0; }
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Row-major binary raster; nonzero = defect.
struct BinaryMask {
  Extent extent;
  std::vector<std::uint8_t> values;
};

namespace detail {

struct LinearTap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double frac = 0.0;
};

// Half-pixel source coordinates, clamped at the leading edge (align_corners=false).
inline std::vector<LinearTap> linear_taps(std::size_t in, std::size_t out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace detail

// Bilinear resize of each channel plane. Constants are preserved exactly.
inline std::vector<float> resize_bilinear(std::span<const float> src, std::size_t channels,
                                          Extent from, Extent to) {
  if (from.area() == 0 || to.area() == 0) throw InvalidArgument("resize_bilinear: empty extent");
  if (src.size() != channels * from.area())
    throw InvalidArgument("resize_bilinear: buffer does not match extent");
  std::vector<float> out(channels * to.area());
  if (from == to) {
    std::copy(src.begin(), src.end(), out.begin());
    return out;
  }
  const auto ys = detail::linear_taps(from.height, to.height);
  const auto xs = detail::linear_taps(from.width, to.width);
  for (std::size_t c = 0; c < channels; ++c) {
    const float* plane = src.data() + c * from.area();
    float* dst = out.data() + c * to.area();
    for (std::size_t y = 0; y < to.height; ++y) {
      const auto& ty = ys[y];
      const float* r0 = plane + ty.lo * from.width;
      const float* r1 = plane + ty.hi * from.width;
      for (std::size_t x = 0; x < to.width; ++x) {
        const auto& tx = xs[x];
        const double top = r0[tx.lo] + (static_cast<double>(r0[tx.hi]) - r0[tx.lo]) * tx.frac;
        const double bottom = r1[tx.lo] + (static_cast<double>(r1[tx.hi]) - r1[tx.lo]) * tx.frac;
        // Written as a + (b - a) * t so that equal endpoints reproduce the endpoint bit-exactly.
        dst[y * to.width + x] = static_cast<float>(top + (bottom - top) * ty.frac);
      }
    }
  }
  return out;
}

// Normalized 1-D Gaussian taps; radius follows the usual 4-sigma truncation.
inline std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::size_t>(4.0 * sigma + 0.5);
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable Gaussian blur of a single plane with replicated borders.
// sigma <= 0 leaves the plane untouched.
inline void gaussian_smooth(std::span<float> plane, Extent extent, double sigma) {
  if (sigma <= 0.0 || plane.empty()) return;
  if (plane.size() != extent.area()) throw InvalidArgument("gaussian_smooth: buffer does not match extent");
  const auto kernel = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const auto h = static_cast<std::ptrdiff_t>(extent.height);
  const auto w = static_cast<std::ptrdiff_t>(extent.width);
  std::vector<double> tmp(plane.size());

  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const auto xx = std::clamp<std::ptrdiff_t>(x + k, 0, w - 1);
        acc += kernel[static_cast<std::size_t>(k + radius)] * plane[static_cast<std::size_t>(y * w + xx)];
      }
      tmp[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const auto yy = std::clamp<std::ptrdiff_t>(y + k, 0, h - 1);
        acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(yy * w + x)];
      }
      plane[static_cast<std::size_t>(y * w + x)] = static_cast<float>(acc);
    }
  }
}

}  // namespace patchbank
