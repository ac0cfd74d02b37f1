#pragma once

// Raster file IO backed by OpenCV's codecs (PNG, JPEG, BMP, ...).

#include <algorithm>
#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "patchbank/binary_container.hpp"
#include "patchbank/error.hpp"
#include "patchbank/file_util.hpp"
#include "patchbank/image_ops.hpp"
#include "patchbank/memory_bank.hpp"

namespace patchbank {

inline RgbImage load_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image '" + path.string() + "'");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage img(static_cast<std::size_t>(rgb.cols), static_cast<std::size_t>(rgb.rows));
  for (int y = 0; y < rgb.rows; ++y)
    std::copy_n(rgb.ptr<std::uint8_t>(y), rgb.cols * 3, img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3);
  return img;
}

inline void save_rgb(const RgbImage& img, const std::filesystem::path& path) {
  cv::Mat rgb(static_cast<int>(img.height), static_cast<int>(img.width), CV_8UC3,
              const_cast<std::uint8_t*>(img.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write image '" + path.string() + "'");
}

// Reads a grayscale or indexed mask and binarizes it at > 0.
inline BinaryMask load_mask(const std::filesystem::path& path, Extent expected) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("cannot read mask '" + path.string() + "'");
  const Extent got{static_cast<std::size_t>(m.rows), static_cast<std::size_t>(m.cols)};
  if (got != expected)
    throw DimensionError("mask '" + path.string() + "' is " + std::to_string(got.height) + "x" +
                         std::to_string(got.width) + ", expected " + std::to_string(expected.height) + "x" +
                         std::to_string(expected.width));
  BinaryMask mask{got, std::vector<std::uint8_t>(got.area())};
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) mask.values[static_cast<std::size_t>(y) * got.width + static_cast<std::size_t>(x)] = row[x] > 0 ? 1 : 0;
  }
  return mask;
}

inline void save_mask(const BinaryMask& mask, const std::filesystem::path& path) {
  cv::Mat m(static_cast<int>(mask.extent.height), static_cast<int>(mask.extent.width), CV_8UC1);
  for (std::size_t i = 0; i < mask.values.size(); ++i) m.data[i] = mask.values[i] ? 255 : 0;
  if (!cv::imwrite(path.string(), m)) throw IoError("cannot write mask '" + path.string() + "'");
}

// 16-bit grayscale PNG, min-max normalized per image (a constant map is written as zeros).
inline void write_map_png16(const ScoreMap& map, const std::filesystem::path& path) {
  cv::Mat m(static_cast<int>(map.extent.height), static_cast<int>(map.extent.width), CV_16UC1);
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double span = map.values.empty() ? 0.0 : static_cast<double>(*hi) - *lo;
  auto* dst = reinterpret_cast<std::uint16_t*>(m.data);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    dst[i] = span > 0.0 ? static_cast<std::uint16_t>(std::lround((map.values[i] - *lo) / span * 65535.0)) : 0;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw IoError("cannot write '" + path.string() + "'");
}

inline constexpr std::string_view kMapMagic = "AMAP";

// Lossless float sidecar for anomaly maps, same framing as bank/pack files.
inline void write_map_raw(const ScoreMap& map, const std::string& image_id, const std::filesystem::path& path) {
  nlohmann::json header = {{"image_id", image_id}, {"height", map.extent.height}, {"width", map.extent.width}};
  write_file_atomic(path, encode_container(kMapMagic, header, map.values));
}

inline ScoreMap read_map_raw(const std::filesystem::path& path) {
  Container c = decode_container(read_file_bytes(path), kMapMagic, path.string());
  try {
    ScoreMap map{{c.header.at("height").get<std::size_t>(), c.header.at("width").get<std::size_t>()}, std::move(c.payload)};
    if (map.values.size() != map.extent.area()) throw FormatError(path.string() + ": payload does not match extent");
    return map;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }
}

}  // namespace patchbank
