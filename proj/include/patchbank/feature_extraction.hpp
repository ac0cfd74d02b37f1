#pragma once

// Image preprocessing, backbone inference with named layer taps, and the
// feature-pack (FPAK) container for pre-extracted activations.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "patchbank/binary_container.hpp"
#include "patchbank/error.hpp"
#include "patchbank/file_util.hpp"
#include "patchbank/image_ops.hpp"
#include "patchbank/patch_features.hpp"
#include "patchbank/rng.hpp"

namespace patchbank {

enum class ExtractorKind {
  onnx,    // exported backbone run through OpenCV's DNN module
  pixels,  // normalized pixels, box-downsampled; no model required
};

struct ExtractorSpec {
  ExtractorKind kind = ExtractorKind::onnx;
  std::filesystem::path model_path;
  std::vector<std::string> taps;  // ordered shallow to deep
  std::size_t native_input_size = 224;
  double scale = 1.0;
  std::array<double, 3> mean = {0.485, 0.456, 0.406};
  std::array<double, 3> std = {0.229, 0.224, 0.225};
  std::size_t pixel_stride = 8;   // pixels extractor only

  std::size_t effective_input_size() const {
    if (!(scale > 0.0) || native_input_size == 0) throw InvalidArgument("extractor: native size and scale must be positive");
    const auto side = static_cast<std::size_t>(std::lround(static_cast<double>(native_input_size) * scale));
    if (side < 64 || side % 2 != 0)
      throw InvalidArgument("extractor: effective input size " + std::to_string(side) + " must be even and >= 64");
    return side;
  }

  void validate() const {
    const std::size_t side = effective_input_size();
    for (double s : std)
      if (!(s > 0.0)) throw InvalidArgument("extractor: normalization std must be positive");
    if (kind == ExtractorKind::onnx) {
      if (model_path.empty()) throw ConfigError("extractor: no model path given");
      if (taps.empty()) throw ConfigError("extractor: no taps given");
    } else if (pixel_stride == 0 || side % pixel_stride != 0) {
      throw ConfigError("extractor: pixel stride must divide the input size");
    }
  }
};

// Bilinear resize to the effective input size, scaling to [0,1] and per-channel
// standardization. Output is a 3-channel, channel-major map named "input".
inline FeatureMap preprocess(const RgbImage& image, const ExtractorSpec& spec) {
  if (image.empty()) throw InvalidArgument("preprocess: zero-sized image");
  const std::size_t side = spec.effective_input_size();
  const Extent from = image.extent();
  std::vector<float> planar(3 * from.area());
  for (std::size_t p = 0; p < from.area(); ++p)
    for (std::size_t c = 0; c < 3; ++c) planar[c * from.area() + p] = image.pixels[p * 3 + c];
  FeatureMap out;
  out.layer_name = "input";
  out.channels = 3;
  out.height = side;
  out.width = side;
  out.data = resize_bilinear(planar, 3, from, {side, side});
  const std::size_t area = side * side;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < area; ++p) {
      float& v = out.data[c * area + p];
      v = static_cast<float>((v / 255.0 - spec.mean[c]) / spec.std[c]);
    }
  return out;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  // One map per tap, in tap order.
  virtual std::vector<FeatureMap> extract(const FeatureMap& input) = 0;
  virtual const nlohmann::json& fingerprint() const = 0;
};

class PixelExtractor final : public FeatureExtractor {
 public:
  explicit PixelExtractor(const ExtractorSpec& spec) : stride_(spec.pixel_stride) {
    spec.validate();
    fingerprint_ = {{"kind", "pixels"},
                    {"taps", {"pixels"}},
                    {"input_size", spec.effective_input_size()},
                    {"stride", stride_}};
  }

  std::vector<FeatureMap> extract(const FeatureMap& input) override {
    if (input.height % stride_ != 0 || input.width % stride_ != 0)
      throw InvalidArgument("pixel extractor: input not divisible by stride");
    FeatureMap out;
    out.layer_name = "pixels";
    out.channels = input.channels;
    out.height = input.height / stride_;
    out.width = input.width / stride_;
    out.data.assign(out.channels * out.height * out.width, 0.0f);
    const double norm = 1.0 / static_cast<double>(stride_ * stride_);
    for (std::size_t c = 0; c < out.channels; ++c)
      for (std::size_t y = 0; y < out.height; ++y)
        for (std::size_t x = 0; x < out.width; ++x) {
          double acc = 0.0;
          for (std::size_t dy = 0; dy < stride_; ++dy)
            for (std::size_t dx = 0; dx < stride_; ++dx) acc += input.at(c, y * stride_ + dy, x * stride_ + dx);
          out.data[(c * out.height + y) * out.width + x] = static_cast<float>(acc * norm);
        }
    return {std::move(out)};
  }

  const nlohmann::json& fingerprint() const override { return fingerprint_; }

 private:
  std::size_t stride_;
  nlohmann::json fingerprint_;
};

// Not thread-safe: use one instance per worker.
class OnnxExtractor final : public FeatureExtractor {
 public:
  explicit OnnxExtractor(const ExtractorSpec& spec) : taps_(spec.taps) {
    spec.validate();
    if (!std::filesystem::is_regular_file(spec.model_path))
      throw ConfigError("extractor: model '" + spec.model_path.string() + "' not found");
    const std::string bytes = read_file_bytes(spec.model_path);
    try {
      net_ = cv::dnn::readNetFromONNX(bytes.data(), bytes.size());
    } catch (const cv::Exception& e) {
      throw ConfigError("extractor: cannot load ONNX model '" + spec.model_path.string() + "': " + e.what());
    }
    net_.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net_.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
    const std::vector<std::string> available = output_names();
    for (const auto& tap : taps_)
      if (std::find(available.begin(), available.end(), tap) == available.end()) {
        std::string list;
        for (const auto& a : available) list += (list.empty() ? "" : ", ") + a;
        throw ConfigError("extractor: tap '" + tap + "' is not an output of '" + spec.model_path.string() +
                          "'; available: " + list);
      }
    fingerprint_ = {{"kind", "onnx"},
                    {"model_hash", hex64(fnv1a64(bytes))},
                    {"taps", taps_},
                    {"input_size", spec.effective_input_size()}};
  }

  std::vector<std::string> output_names() const {
    std::vector<std::string> names = net_.getLayerNames();
    for (const auto& n : net_.getUnconnectedOutLayersNames())
      if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    return names;
  }

  std::vector<FeatureMap> extract(const FeatureMap& input) override {
    const int shape[] = {1, static_cast<int>(input.channels), static_cast<int>(input.height), static_cast<int>(input.width)};
    cv::Mat blob(4, shape, CV_32F, const_cast<float*>(input.data.data()));
    std::vector<cv::Mat> outs;
    try {
      net_.setInput(blob);
      net_.forward(outs, taps_);
    } catch (const cv::Exception& e) {
      throw Error(std::string("extractor: inference failed: ") + e.what());
    }
    std::vector<FeatureMap> maps;
    for (std::size_t i = 0; i < outs.size(); ++i) {
      const cv::Mat& o = outs[i];
      if (o.dims != 4 || o.size[0] != 1 || o.type() != CV_32F)
        throw Error("extractor: tap '" + taps_[i] + "' did not produce a 1xCxHxW float tensor");
      FeatureMap m;
      m.layer_name = taps_[i];
      m.channels = static_cast<std::size_t>(o.size[1]);
      m.height = static_cast<std::size_t>(o.size[2]);
      m.width = static_cast<std::size_t>(o.size[3]);
      const cv::Mat dense = o.isContinuous() ? o : o.clone();
      const auto* p = dense.ptr<float>();
      m.data.assign(p, p + m.channels * m.height * m.width);
      maps.push_back(std::move(m));
    }
    return maps;
  }

  const nlohmann::json& fingerprint() const override { return fingerprint_; }

 private:
  std::vector<std::string> taps_;
  cv::dnn::Net net_;
  nlohmann::json fingerprint_;
};

inline std::unique_ptr<FeatureExtractor> make_extractor(const ExtractorSpec& spec) {
  if (spec.kind == ExtractorKind::pixels) return std::make_unique<PixelExtractor>(spec);
  return std::make_unique<OnnxExtractor>(spec);
}

// --- feature packs -----------------------------------------------------------

struct FeaturePack {
  std::string image_id;
  nlohmann::json fingerprint;
  Extent source_extent;  // size of the original image, target for anomaly maps
  std::vector<FeatureMap> layers;
};

inline FeaturePack extract_pack(FeatureExtractor& extractor, const ExtractorSpec& spec, const RgbImage& image,
                                std::string image_id) {
  return {std::move(image_id), extractor.fingerprint(), image.extent(), extractor.extract(preprocess(image, spec))};
}

inline constexpr std::string_view kPackMagic = "FPAK";

inline std::string encode_pack(const FeaturePack& pack) {
  nlohmann::json layers = nlohmann::json::array();
  std::vector<float> payload;
  for (const auto& l : pack.layers) {
    layers.push_back({{"name", l.layer_name}, {"c", l.channels}, {"h", l.height}, {"w", l.width}});
    payload.insert(payload.end(), l.data.begin(), l.data.end());
  }
  nlohmann::json header = {{"image_id", pack.image_id},
                           {"fingerprint", pack.fingerprint},
                           {"layers", layers},
                           {"source_hw", {pack.source_extent.height, pack.source_extent.width}}};
  return encode_container(kPackMagic, header, payload);
}

inline FeaturePack decode_pack(std::string_view bytes, const std::string& name = "pack") {
  Container c = decode_container(bytes, kPackMagic, name);
  try {
    FeaturePack pack;
    pack.image_id = c.header.at("image_id").get<std::string>();
    pack.fingerprint = c.header.at("fingerprint");
    if (c.header.contains("source_hw"))
      pack.source_extent = {c.header["source_hw"].at(0).get<std::size_t>(), c.header["source_hw"].at(1).get<std::size_t>()};
    std::size_t offset = 0;
    for (const auto& l : c.header.at("layers")) {
      FeatureMap m;
      m.layer_name = l.at("name").get<std::string>();
      m.channels = l.at("c").get<std::size_t>();
      m.height = l.at("h").get<std::size_t>();
      m.width = l.at("w").get<std::size_t>();
      const std::size_t n = m.channels * m.height * m.width;
      if (offset + n > c.payload.size()) throw FormatError(name + ": truncated payload");
      m.data.assign(c.payload.begin() + static_cast<std::ptrdiff_t>(offset),
                    c.payload.begin() + static_cast<std::ptrdiff_t>(offset + n));
      offset += n;
      pack.layers.push_back(std::move(m));
    }
    if (offset != c.payload.size()) throw FormatError(name + ": payload longer than declared layers");
    return pack;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": malformed header: " + e.what());
  }
}

inline void write_pack(const FeaturePack& pack, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pack(pack));
}

inline FeaturePack read_pack(const std::filesystem::path& path) {
  return decode_pack(read_file_bytes(path), path.string());
}

// Loads a batch that must share one extractor fingerprint (the first file's,
// unless `expected` is given).
inline std::vector<FeaturePack> read_packs(std::span<const std::filesystem::path> paths,
                                           const std::optional<nlohmann::json>& expected = std::nullopt) {
  std::vector<FeaturePack> packs;
  std::optional<nlohmann::json> reference = expected;
  for (const auto& p : paths) {
    FeaturePack pack = read_pack(p);
    if (!reference) reference = pack.fingerprint;
    if (pack.fingerprint != *reference)
      throw FingerprintMismatch("feature pack '" + p.string() + "' has fingerprint " + pack.fingerprint.dump() +
                                ", expected " + reference->dump());
    packs.push_back(std::move(pack));
  }
  return packs;
}

}  // namespace patchbank
