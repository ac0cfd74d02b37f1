#pragma once

// Image-space augmentation of normal training images. Every augmented variant
// applies exactly one transformation, drawn uniformly from the active set.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchbank/error.hpp"
#include "patchbank/image_ops.hpp"
#include "patchbank/parallel.hpp"
#include "patchbank/profile.hpp"
#include "patchbank/rng.hpp"

namespace patchbank {

enum class AugType { affine, brightness_contrast, blur, sharpen, flip };

inline constexpr std::array<AugType, 5> kAllAugTypes = {AugType::affine, AugType::brightness_contrast, AugType::blur,
                                                        AugType::sharpen, AugType::flip};

inline std::string_view to_string(AugType t) {
  switch (t) {
    case AugType::affine: return "Affine";
    case AugType::brightness_contrast: return "BrightnessContrast";
    case AugType::blur: return "Blur";
    case AugType::sharpen: return "Sharpen";
    case AugType::flip: return "Flip";
  }
  return "?";
}

inline AugType parse_aug_type(std::string_view name) {
  std::string lower;
  for (char c : name)
    if (c != '_' && c != '-') lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "affine") return AugType::affine;
  if (lower == "brightnesscontrast" || lower == "randombrightnesscontrast") return AugType::brightness_contrast;
  if (lower == "blur") return AugType::blur;
  if (lower == "sharpen") return AugType::sharpen;
  if (lower == "flip") return AugType::flip;
  throw InvalidArgument("unknown augmentation type '" + std::string(name) + "'");
}

// Sampling ranges for each augmentation's parameters.
struct AugmentParams {
  double rotation_deg = 15.0;      // rotation ~ U(-r, r)
  double scale_min = 0.9;
  double scale_max = 1.1;
  double translate_frac = 0.05;    // per-axis shift ~ U(-t, t) of the image side
  std::vector<int> blur_kernels = {3, 5, 7};
  double brightness = 0.2;         // additive delta ~ U(-b, b), in [0,1] intensity units
  double contrast = 0.2;           // factor 1 + U(-c, c) around mid-gray
  double sharpen_alpha_min = 0.2;
  double sharpen_alpha_max = 0.5;
  double sharpen_lightness_min = 0.5;
  double sharpen_lightness_max = 1.0;

  friend bool operator==(const AugmentParams&, const AugmentParams&) = default;
};

struct AugmentConfig {
  std::size_t num_augs_per_image = 0;
  std::vector<AugType> active_types;
  AugmentParams params;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_augs_per_image > 0 && active_types.empty())
      throw InvalidArgument("augmentation: num_augs > 0 requires at least one active type");
    if (params.blur_kernels.empty()) throw InvalidArgument("augmentation: blur kernel list is empty");
    for (int k : params.blur_kernels)
      if (k < 1 || k % 2 == 0) throw InvalidArgument("augmentation: blur kernels must be odd and positive");
    if (params.scale_min <= 0.0 || params.scale_max < params.scale_min)
      throw InvalidArgument("augmentation: invalid scale range");
  }

  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

// --- parameterized transformations -----------------------------------------

struct AffineParams {
  double angle_deg = 0.0;  // counter-clockwise as displayed
  double scale = 1.0;
  double shift_x = 0.0;    // fraction of width
  double shift_y = 0.0;    // fraction of height
};

namespace detail {

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline double sample_clamped(const RgbImage& img, double x, double y, std::size_t c) {
  const double max_x = static_cast<double>(img.width - 1);
  const double max_y = static_cast<double>(img.height - 1);
  x = std::clamp(x, 0.0, max_x);
  y = std::clamp(y, 0.0, max_y);
  const auto x0 = static_cast<std::size_t>(x);
  const auto y0 = static_cast<std::size_t>(y);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double top = img.at(y0, x0, c) * (1 - fx) + img.at(y0, x1, c) * fx;
  const double bottom = img.at(y1, x0, c) * (1 - fx) + img.at(y1, x1, c) * fx;
  return top * (1 - fy) + bottom * fy;
}

// 2-D convolution with replicated borders; kernel is k x k, row-major.
inline RgbImage convolve(const RgbImage& img, std::span<const double> kernel, std::size_t k) {
  RgbImage out(img.width, img.height);
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const auto w = static_cast<std::ptrdiff_t>(img.width);
  const auto h = static_cast<std::ptrdiff_t>(img.height);
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
          const auto yy = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y + dy, 0, h - 1));
          for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
            const auto xx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x + dx, 0, w - 1));
            acc += kernel[static_cast<std::size_t>((dy + r) * static_cast<std::ptrdiff_t>(k) + dx + r)] *
                   img.at(yy, xx, c);
          }
        }
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = to_u8(acc);
      }
  return out;
}

}  // namespace detail

// Rotation and scale about the image center plus translation; edge pixels
// replicate outside the source.
inline RgbImage affine_transform(const RgbImage& img, const AffineParams& p) {
  if (p.scale <= 0.0) throw InvalidArgument("affine_transform: scale must be positive");
  RgbImage out(img.width, img.height);
  const double theta = p.angle_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double tx = p.shift_x * static_cast<double>(img.width);
  const double ty = p.shift_y * static_cast<double>(img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dx = static_cast<double>(x) - cx - tx;
      const double dy = static_cast<double>(y) - cy - ty;
      const double sx = cx + (cos_t * dx - sin_t * dy) / p.scale;
      const double sy = cy + (sin_t * dx + cos_t * dy) / p.scale;
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = detail::to_u8(detail::sample_clamped(img, sx, sy, c));
    }
  return out;
}

// out = (v - 0.5) * (1 + contrast) + 0.5 + brightness on [0,1] intensities.
inline RgbImage brightness_contrast(const RgbImage& img, double brightness, double contrast) {
  RgbImage out = img;
  const double factor = 1.0 + contrast;
  for (auto& px : out.pixels) {
    const double v = px / 255.0;
    px = detail::to_u8(((v - 0.5) * factor + 0.5 + brightness) * 255.0);
  }
  return out;
}

// Box blur.
inline RgbImage blur(const RgbImage& img, int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw InvalidArgument("blur: kernel size must be odd and positive");
  const auto k = static_cast<std::size_t>(kernel_size);
  const std::vector<double> kernel(k * k, 1.0 / static_cast<double>(k * k));
  return detail::convolve(img, kernel, k);
}

// Blend of identity and the 3x3 Laplacian-style sharpening kernel.
inline RgbImage sharpen(const RgbImage& img, double alpha, double lightness) {
  std::array<double, 9> kernel{};
  for (double& v : kernel) v = -alpha;
  kernel[4] = (1.0 - alpha) + alpha * (8.0 + lightness);
  return detail::convolve(img, kernel, 3);
}

inline RgbImage flip(const RgbImage& img, bool horizontal) {
  RgbImage out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::size_t sx = horizontal ? img.width - 1 - x : x;
      const std::size_t sy = horizontal ? y : img.height - 1 - y;
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  return out;
}

// Draws this type's parameters from `rng` and applies it.
inline RgbImage apply_augmentation(const RgbImage& img, AugType type, Xoshiro256StarStar& rng,
                                   const AugmentParams& params = {}) {
  if (img.empty() || img.pixels.size() != img.width * img.height * 3)
    throw InvalidArgument("apply_augmentation: invalid image");
  switch (type) {
    case AugType::affine: {
      AffineParams p;
      p.angle_deg = rng.uniform(-params.rotation_deg, params.rotation_deg);
      p.scale = rng.uniform(params.scale_min, params.scale_max);
      p.shift_x = rng.uniform(-params.translate_frac, params.translate_frac);
      p.shift_y = rng.uniform(-params.translate_frac, params.translate_frac);
      return affine_transform(img, p);
    }
    case AugType::brightness_contrast: {
      const double b = rng.uniform(-params.brightness, params.brightness);
      const double c = rng.uniform(-params.contrast, params.contrast);
      return brightness_contrast(img, b, c);
    }
    case AugType::blur:
      return blur(img, params.blur_kernels[rng.bounded(params.blur_kernels.size())]);
    case AugType::sharpen: {
      const double alpha = rng.uniform(params.sharpen_alpha_min, params.sharpen_alpha_max);
      const double lightness = rng.uniform(params.sharpen_lightness_min, params.sharpen_lightness_max);
      return sharpen(img, alpha, lightness);
    }
    case AugType::flip:
      return flip(img, rng.bounded(2) == 0);
  }
  throw InvalidArgument("apply_augmentation: unknown augmentation type");
}

struct AugmentedImage {
  RgbImage image;
  bool augmented = false;
  std::size_t source_index = 0;
  std::string source_id;
  std::string image_id;              // source_id for originals, source_id + "__augNN" otherwise
  std::optional<AugType> type;
};

inline std::string augmented_id(const std::string& source_id, std::size_t variant) {
  std::string n = std::to_string(variant);
  if (n.size() < 2) n.insert(0, 2 - n.size(), '0');
  return source_id + "__aug" + n;
}

// Originals first, then num_augs variants per original. Variant v of image i
// uses its own stream seeded from (cfg.seed, i, v), so generation can run in
// any order or in parallel.
inline std::vector<AugmentedImage> generate_augmented_set(std::span<const RgbImage> images,
                                                          std::span<const std::string> ids, const AugmentConfig& cfg,
                                                          std::size_t jobs = 1) {
  if (images.empty()) throw InvalidArgument("generate_augmented_set: no images given");
  if (ids.size() != images.size()) throw InvalidArgument("generate_augmented_set: ids do not match images");
  cfg.validate();
  const std::size_t a = cfg.num_augs_per_image;
  std::vector<AugmentedImage> out(images.size() * (1 + a));
  for (std::size_t i = 0; i < images.size(); ++i) out[i] = {images[i], false, i, ids[i], ids[i], std::nullopt};
  parallel_for(images.size() * a, jobs, [&](std::size_t job) {
    const std::size_t i = job / a;
    const std::size_t v = job % a;
    Xoshiro256StarStar rng(derive_seed(cfg.seed, i, v));
    const AugType type = cfg.active_types[rng.bounded(cfg.active_types.size())];
    out[images.size() + job] = {apply_augmentation(images[i], type, rng, cfg.params), true, i, ids[i],
                                augmented_id(ids[i], v), type};
  });
  return out;
}

// Default active set: all five types for VisA; Flip excluded for MVTec, where
// flipping is itself an anomaly in some categories. "<profile>-no-<type>"
// removes one type, e.g. "mvtec-no-sharpen".
inline std::vector<AugType> active_set_for(std::string_view profile) {
  std::string_view base = profile;
  std::optional<AugType> removed;
  if (const auto pos = profile.find("-no-"); pos != std::string_view::npos) {
    base = profile.substr(0, pos);
    removed = parse_aug_type(profile.substr(pos + 4));
  }
  std::vector<AugType> types;
  const DatasetProfile p = parse_profile(base);
  for (AugType t : kAllAugTypes)
    if (!(p == DatasetProfile::mvtec && t == AugType::flip) && t != removed) types.push_back(t);
  return types;
}

inline std::vector<AugType> active_set_for(DatasetProfile profile) { return active_set_for(to_string(profile)); }

// --- JSON ------------------------------------------------------------------

inline nlohmann::json to_json(const AugmentConfig& cfg) {
  nlohmann::json types = nlohmann::json::array();
  for (AugType t : cfg.active_types) types.push_back(std::string(to_string(t)));
  const auto& p = cfg.params;
  return {{"num_augs", cfg.num_augs_per_image},
          {"types", types},
          {"params",
           {{"affine", {{"rotation_deg", p.rotation_deg}, {"scale", {p.scale_min, p.scale_max}}, {"translate", p.translate_frac}}},
            {"blur", {{"kernel_sizes", p.blur_kernels}}},
            {"brightness_contrast", {{"brightness", p.brightness}, {"contrast", p.contrast}}},
            {"sharpen",
             {{"alpha", {p.sharpen_alpha_min, p.sharpen_alpha_max}},
              {"lightness", {p.sharpen_lightness_min, p.sharpen_lightness_max}}}}}},
          {"seed", cfg.seed}};
}

// Missing keys keep their defaults. `types` may be omitted when a profile is known.
inline AugmentConfig augment_config_from_json(const nlohmann::json& j, std::optional<DatasetProfile> profile = {}) {
  AugmentConfig cfg;
  cfg.num_augs_per_image = j.value("num_augs", std::size_t{0});
  cfg.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("types")) {
    for (const auto& t : j.at("types")) cfg.active_types.push_back(parse_aug_type(t.get<std::string>()));
  } else if (profile) {
    cfg.active_types = active_set_for(*profile);
  }
  if (j.contains("params")) {
    const auto& p = j.at("params");
    auto& out = cfg.params;
    if (p.contains("affine")) {
      const auto& a = p.at("affine");
      out.rotation_deg = a.value("rotation_deg", out.rotation_deg);
      if (a.contains("scale")) {
        out.scale_min = a.at("scale").at(0).get<double>();
        out.scale_max = a.at("scale").at(1).get<double>();
      }
      out.translate_frac = a.value("translate", out.translate_frac);
    }
    if (p.contains("blur")) out.blur_kernels = p.at("blur").value("kernel_sizes", out.blur_kernels);
    if (p.contains("brightness_contrast")) {
      const auto& b = p.at("brightness_contrast");
      out.brightness = b.value("brightness", out.brightness);
      out.contrast = b.value("contrast", out.contrast);
    }
    if (p.contains("sharpen")) {
      const auto& s = p.at("sharpen");
      if (s.contains("alpha")) {
        out.sharpen_alpha_min = s.at("alpha").at(0).get<double>();
        out.sharpen_alpha_max = s.at("alpha").at(1).get<double>();
      }
      if (s.contains("lightness")) {
        out.sharpen_lightness_min = s.at("lightness").at(0).get<double>();
        out.sharpen_lightness_max = s.at("lightness").at(1).get<double>();
      }
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace patchbank
