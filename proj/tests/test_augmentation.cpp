#include <gtest/gtest.h>

#include <random>

#include "patchbank/augmentation.hpp"

using namespace patchbank;

namespace {

RgbImage random_image(std::mt19937& gen, std::size_t w, std::size_t h) {
  RgbImage img(w, h);
  std::uniform_int_distribution<int> u(0, 255);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(u(gen));
  return img;
}

RgbImage pattern2x2() {
  RgbImage img(2, 2);
  const std::uint8_t v[4] = {10, 20, 30, 40};  // A B / C D
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[i * 3 + c] = static_cast<std::uint8_t>(v[i] + c);
  return img;
}

AugmentConfig config(std::size_t a, std::vector<AugType> types, std::uint64_t seed) {
  AugmentConfig cfg;
  cfg.num_augs_per_image = a;
  cfg.active_types = std::move(types);
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Flip, IsAnInvolution) {
  std::mt19937 gen(1);
  const auto img = random_image(gen, 7, 5);
  EXPECT_EQ(flip(flip(img, true), true), img);
  EXPECT_EQ(flip(flip(img, false), false), img);
  EXPECT_NE(flip(img, true), img);
  EXPECT_EQ(flip(img, true).at(0, 0, 1), img.at(0, 6, 1));
  EXPECT_EQ(flip(img, false).at(0, 0, 2), img.at(4, 0, 2));
}

TEST(BrightnessContrast, ZeroIsIdentity) {
  std::mt19937 gen(2);
  const auto img = random_image(gen, 9, 4);
  EXPECT_EQ(brightness_contrast(img, 0.0, 0.0), img);
}

TEST(BrightnessContrast, ClampsToValidRange) {
  RgbImage img(2, 1);
  img.pixels = {0, 10, 100, 200, 250, 255};
  const auto up = brightness_contrast(img, 1.0, 0.0);
  for (auto p : up.pixels) EXPECT_EQ(p, 255);
  const auto down = brightness_contrast(img, -1.0, 0.0);
  for (auto p : down.pixels) EXPECT_EQ(p, 0);
}

TEST(Affine, QuarterTurnOnTwoByTwo) {
  const auto r = affine_transform(pattern2x2(), {90.0, 1.0, 0.0, 0.0});
  // Counter-clockwise: B D / A C.
  EXPECT_EQ(r.at(0, 0, 0), 20);
  EXPECT_EQ(r.at(0, 1, 0), 40);
  EXPECT_EQ(r.at(1, 0, 0), 10);
  EXPECT_EQ(r.at(1, 1, 0), 30);
  EXPECT_EQ(r.at(1, 1, 2), 32);
}

TEST(Affine, IdentityParametersKeepImage) {
  std::mt19937 gen(3);
  const auto img = random_image(gen, 11, 8);
  EXPECT_EQ(affine_transform(img, {}), img);
  EXPECT_THROW(affine_transform(img, {0.0, 0.0, 0.0, 0.0}), InvalidArgument);
}

TEST(Blur, ConstantImageUnchangedAndKernelsValidated) {
  const RgbImage img(6, 6, 77);
  for (int k : {3, 5, 7}) EXPECT_EQ(blur(img, k), img);
  EXPECT_THROW(blur(img, 4), InvalidArgument);
}

TEST(Sharpen, ConstantImageScaledByKernelSum) {
  // Kernel sums to (1 - alpha) + alpha * lightness.
  const RgbImage img(5, 5, 100);
  const auto out = sharpen(img, 0.5, 0.4);
  for (auto p : out.pixels) EXPECT_EQ(p, 70);
  EXPECT_EQ(sharpen(img, 0.3, 1.0), img);
  EXPECT_EQ(sharpen(img, 0.0, 1.0), img);
}

TEST(ApplyAugmentation, PreservesDimensionsForEveryType) {
  std::mt19937 gen(4);
  const auto img = random_image(gen, 13, 9);
  for (AugType t : kAllAugTypes) {
    Xoshiro256StarStar rng(5);
    const auto out = apply_augmentation(img, t, rng);
    EXPECT_EQ(out.width, 13u) << to_string(t);
    EXPECT_EQ(out.height, 9u) << to_string(t);
    EXPECT_EQ(out.pixels.size(), img.pixels.size());
  }
  Xoshiro256StarStar rng(5);
  EXPECT_THROW(apply_augmentation(RgbImage{}, AugType::blur, rng), InvalidArgument);
  EXPECT_THROW(apply_augmentation(img, static_cast<AugType>(17), rng), InvalidArgument);
}

TEST(AugType, NamesRoundTrip) {
  for (AugType t : kAllAugTypes) EXPECT_EQ(parse_aug_type(to_string(t)), t);
  EXPECT_EQ(parse_aug_type("sharpen"), AugType::sharpen);
  EXPECT_THROW(parse_aug_type("Rotate"), InvalidArgument);
}

TEST(GenerateAugmentedSet, ZeroAugsKeepsOriginals) {
  std::mt19937 gen(6);
  const std::vector<RgbImage> imgs{random_image(gen, 4, 4), random_image(gen, 4, 4)};
  const std::vector<std::string> ids{"a", "b"};
  const auto out = generate_augmented_set(imgs, ids, config(0, {}, 0));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_FALSE(out[0].augmented);
  EXPECT_EQ(out[1].image, imgs[1]);
  EXPECT_EQ(out[1].image_id, "b");
}

TEST(GenerateAugmentedSet, EightPerImage) {
  std::mt19937 gen(7);
  const std::vector<RgbImage> imgs{random_image(gen, 8, 8), random_image(gen, 8, 8)};
  const std::vector<std::string> ids{"a", "b"};
  const auto out = generate_augmented_set(imgs, ids, config(8, active_set_for("visa"), 3));
  ASSERT_EQ(out.size(), 18u);
  EXPECT_FALSE(out[0].augmented);
  EXPECT_FALSE(out[1].augmented);
  for (std::size_t i = 2; i < 18; ++i) {
    EXPECT_TRUE(out[i].augmented);
    EXPECT_EQ(out[i].source_id, (i - 2) < 8 ? "a" : "b");
  }
  EXPECT_EQ(out[2].image_id, "a__aug00");
  EXPECT_EQ(out[17].image_id, "b__aug07");
}

TEST(GenerateAugmentedSet, EmptyActiveSetRejected) {
  const std::vector<RgbImage> imgs{RgbImage(2, 2)};
  const std::vector<std::string> ids{"a"};
  EXPECT_THROW(generate_augmented_set(imgs, ids, config(1, {}, 0)), InvalidArgument);
  EXPECT_THROW(generate_augmented_set(std::span<const RgbImage>{}, std::span<const std::string>{}, config(0, {}, 0)),
               InvalidArgument);
}

TEST(GenerateAugmentedSet, DeterministicAndThreadIndependent) {
  std::mt19937 gen(8);
  std::vector<RgbImage> imgs;
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) {
    imgs.push_back(random_image(gen, 16, 12));
    ids.push_back("i" + std::to_string(i));
  }
  const auto cfg = config(5, active_set_for("visa"), 99);
  const auto a = generate_augmented_set(imgs, ids, cfg, 1);
  const auto b = generate_augmented_set(imgs, ids, cfg, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].type, b[i].type);
  }
  const auto c = generate_augmented_set(imgs, ids, config(5, active_set_for("visa"), 100));
  bool any_diff = false;
  for (std::size_t i = 4; i < a.size(); ++i) any_diff |= !(a[i].image == c[i].image);
  EXPECT_TRUE(any_diff);
}

TEST(GenerateAugmentedSet, DrawnTypesStayInActiveSet) {
  std::mt19937 gen(9);
  const std::vector<RgbImage> imgs{random_image(gen, 6, 6), random_image(gen, 6, 6), random_image(gen, 6, 6)};
  const std::vector<std::string> ids{"a", "b", "c"};
  std::uniform_int_distribution<int> pick(0, 1);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<AugType> active;
    for (AugType t : kAllAugTypes)
      if (pick(gen)) active.push_back(t);
    if (active.empty()) active.push_back(AugType::flip);
    const auto cfg = config(1 + trial % 6, active, static_cast<std::uint64_t>(trial));
    const auto out = generate_augmented_set(imgs, ids, cfg);
    ASSERT_EQ(out.size(), imgs.size() * (1 + cfg.num_augs_per_image));
    for (const auto& a : out) {
      if (!a.augmented) continue;
      ASSERT_TRUE(a.type);
      EXPECT_NE(std::find(active.begin(), active.end(), *a.type), active.end());
      EXPECT_EQ(a.image.width, 6u);
    }
  }
}

TEST(ActiveSet, Profiles) {
  EXPECT_EQ(active_set_for("visa").size(), 5u);
  const auto mvtec = active_set_for("mvtec");
  EXPECT_EQ(mvtec, (std::vector<AugType>{AugType::affine, AugType::brightness_contrast, AugType::blur, AugType::sharpen}));
  EXPECT_EQ(active_set_for(DatasetProfile::mvtec), mvtec);
  EXPECT_EQ(active_set_for("mvtec-no-sharpen"),
            (std::vector<AugType>{AugType::affine, AugType::brightness_contrast, AugType::blur}));
  EXPECT_THROW(active_set_for("kitti"), InvalidArgument);
}

TEST(AugmentConfigJson, RoundTrip) {
  auto cfg = config(8, active_set_for("visa"), 12);
  cfg.params.blur_kernels = {3, 5};
  cfg.params.rotation_deg = 7.5;
  const auto j = to_json(cfg);
  EXPECT_EQ(j.at("num_augs"), 8);
  EXPECT_EQ(j.at("types").size(), 5u);
  EXPECT_TRUE(j.at("params").contains("sharpen"));
  EXPECT_EQ(augment_config_from_json(j), cfg);
  const auto defaulted = augment_config_from_json({{"num_augs", 2}}, DatasetProfile::mvtec);
  EXPECT_EQ(defaulted.active_types.size(), 4u);
}
