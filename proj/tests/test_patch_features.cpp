#include <gtest/gtest.h>

#include <random>

#include "patchbank/patch_features.hpp"

using namespace patchbank;

namespace {

FeatureMap make_map(std::size_t c, std::size_t h, std::size_t w, std::vector<float> data, std::string name = "l") {
  return FeatureMap{std::move(name), c, h, w, std::move(data)};
}

FeatureMap random_map(std::mt19937& gen, std::size_t c, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  std::vector<float> d(c * h * w);
  for (auto& v : d) v = u(gen);
  return make_map(c, h, w, std::move(d));
}

}  // namespace

TEST(NeighborhoodPool, CenterSpikeSpreadsToAllNineCells) {
  const auto out = neighborhood_pool(make_map(1, 3, 3, {0, 0, 0, 0, 9, 0, 0, 0, 0}), 3);
  for (float v : out.data) EXPECT_FLOAT_EQ(v, 1.0f);
}

TEST(NeighborhoodPool, PatchSizeOneIsIdentity) {
  const auto in = make_map(1, 1, 1, {3.5f});
  EXPECT_EQ(neighborhood_pool(in, 1).data, in.data);
  std::mt19937 gen(1);
  const auto big = random_map(gen, 4, 7, 5);
  EXPECT_EQ(neighborhood_pool(big, 1).data, big.data);
}

TEST(NeighborhoodPool, EvenOrZeroPatchSizeRejected) {
  const auto in = make_map(1, 2, 2, {1, 2, 3, 4});
  EXPECT_THROW(neighborhood_pool(in, 2), InvalidArgument);
  EXPECT_THROW(neighborhood_pool(in, 0), InvalidArgument);
}

TEST(NeighborhoodPool, ConstantMapStaysConstantWithReplicatePadding) {
  for (std::size_t p : {1u, 3u, 5u, 7u}) {
    const auto out = neighborhood_pool(make_map(2, 6, 4, std::vector<float>(48, 2.5f)), p, PoolPadding::replicate);
    for (float v : out.data) EXPECT_FLOAT_EQ(v, 2.5f);
    // Pooling again changes nothing.
    EXPECT_EQ(neighborhood_pool(out, p, PoolPadding::replicate).data, out.data);
  }
}

TEST(NeighborhoodPool, ZeroPaddingKeepsConstantInteriorAndCountsPadding) {
  const auto out = neighborhood_pool(make_map(1, 5, 5, std::vector<float>(25, 1.0f)), 3);
  for (std::size_t y = 1; y < 4; ++y)
    for (std::size_t x = 1; x < 4; ++x) EXPECT_FLOAT_EQ(out.at(0, y, x), 1.0f);
  EXPECT_FLOAT_EQ(out.at(0, 0, 0), 4.0f / 9.0f);
  EXPECT_FLOAT_EQ(out.at(0, 0, 2), 6.0f / 9.0f);
}

TEST(NeighborhoodPool, MatchesDirectWindowSum) {
  std::mt19937 gen(9);
  const auto in = random_map(gen, 3, 6, 8);
  const auto out = neighborhood_pool(in, 5);
  for (std::size_t c = 0; c < 3; ++c)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 8; ++x) {
        double acc = 0.0;
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx)
            if (y + dy >= 0 && y + dy < 6 && x + dx >= 0 && x + dx < 8) acc += in.at(c, y + dy, x + dx);
        EXPECT_NEAR(out.at(c, y, x), acc / 25.0, 1e-5);
      }
}

TEST(NeighborhoodPool, RejectsNonFiniteInput) {
  EXPECT_THROW(neighborhood_pool(make_map(1, 1, 2, {1.0f, NAN}), 3), InvalidArgument);
}

TEST(MergeLayers, SingleMapKeepsValues) {
  std::mt19937 gen(2);
  const std::vector<FeatureMap> maps{random_map(gen, 5, 4, 3)};
  const auto g = merge_layers(maps, "img");
  EXPECT_EQ(g.height, 4u);
  EXPECT_EQ(g.width, 3u);
  EXPECT_EQ(g.dim, 5u);
  EXPECT_EQ(g.source_image_id, "img");
  for (std::size_t c = 0; c < 5; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 3; ++x) EXPECT_EQ(g.embedding(y, x)[c], maps[0].at(c, y, x));
}

TEST(MergeLayers, TwoLayerShapeArithmetic) {
  const std::vector<FeatureMap> maps{make_map(512, 56, 56, std::vector<float>(512 * 56 * 56, 0.0f)),
                                     make_map(1024, 28, 28, std::vector<float>(1024 * 28 * 28, 0.0f))};
  const auto g = merge_layers(maps);
  EXPECT_EQ(g.height, 56u);
  EXPECT_EQ(g.width, 56u);
  EXPECT_EQ(g.dim, 1536u);
  EXPECT_EQ(g.embeddings.size(), 56u * 56u * 1536u);
}

TEST(MergeLayers, BilinearTwoByTwoToFourByFour) {
  const std::vector<FeatureMap> maps{make_map(1, 4, 4, std::vector<float>(16, 0.0f)),
                                     make_map(1, 2, 2, {0, 1, 2, 3})};
  const auto g = merge_layers(maps);
  const float expected[4][4] = {{0.0f, 0.25f, 0.75f, 1.0f},
                                {0.5f, 0.75f, 1.25f, 1.5f},
                                {1.5f, 1.75f, 2.25f, 2.5f},
                                {2.0f, 2.25f, 2.75f, 3.0f}};
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_FLOAT_EQ(g.embedding(y, x)[1], expected[y][x]) << y << "," << x;
}

TEST(MergeLayers, ConstantMapsGiveConstantEmbeddings) {
  const std::vector<FeatureMap> maps{make_map(2, 6, 6, std::vector<float>(72, 1.25f)),
                                     make_map(3, 3, 3, std::vector<float>(27, -7.5f))};
  const auto g = merge_layers(maps);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto e = g.embedding(p);
    EXPECT_EQ(e[0], 1.25f);
    EXPECT_EQ(e[1], 1.25f);
    for (std::size_t c = 2; c < 5; ++c) EXPECT_EQ(e[c], -7.5f);
  }
}

TEST(MergeLayers, Errors) {
  EXPECT_THROW(merge_layers(std::span<const FeatureMap>{}), InvalidArgument);
  const std::vector<FeatureMap> wrong_order{make_map(1, 2, 2, {0, 1, 2, 3}),
                                            make_map(1, 4, 4, std::vector<float>(16, 0.0f))};
  EXPECT_THROW(merge_layers(wrong_order), InvalidArgument);
  const std::vector<FeatureMap> bad_len{make_map(2, 2, 2, {0, 1, 2})};
  EXPECT_THROW(merge_layers(bad_len), InvalidArgument);
}

TEST(MergeLayers, DimIsSumOfChannelsOverRandomShapes) {
  std::mt19937 gen(77);
  std::uniform_int_distribution<std::size_t> side(1, 12), chans(1, 6), layers(1, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = side(gen), w = side(gen);
    std::vector<FeatureMap> maps;
    std::size_t expected_dim = 0;
    std::size_t ch = h, cw = w;
    for (std::size_t l = 0, n = layers(gen); l < n; ++l) {
      const std::size_t c = chans(gen);
      maps.push_back(random_map(gen, c, ch, cw));
      expected_dim += c;
      ch = std::max<std::size_t>(1, ch / 2);
      cw = std::max<std::size_t>(1, cw / 2);
    }
    const auto g = merge_layers(maps);
    ASSERT_EQ(g.dim, expected_dim);
    ASSERT_EQ(g.height, h);
    ASSERT_EQ(g.width, w);
  }
}

TEST(FlattenPatches, RowMajorOrder) {
  const std::vector<FeatureMap> maps{make_map(1, 2, 2, {10, 11, 12, 13})};
  const auto g = merge_layers(maps);
  const auto entries = flatten_patches(g);
  ASSERT_EQ(entries.size(), 4u);
  const std::size_t rc[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(entries[i].row, rc[i][0]);
    EXPECT_EQ(entries[i].col, rc[i][1]);
    EXPECT_EQ(entries[i].embedding[0], 10.0f + static_cast<float>(i));
  }
}

TEST(FlattenPatches, SingleCellAndFullGridCounts) {
  const std::vector<FeatureMap> one{make_map(3, 1, 1, {1, 2, 3})};
  EXPECT_EQ(flatten_patches(merge_layers(one)).size(), 1u);
  const std::vector<FeatureMap> big{make_map(1, 56, 56, std::vector<float>(3136, 0.5f))};
  EXPECT_EQ(flatten_patches(merge_layers(big)).size(), 3136u);
}

TEST(FlattenPatches, ReassemblyIsIdentity) {
  std::mt19937 gen(5);
  const std::vector<FeatureMap> maps{random_map(gen, 4, 5, 7), random_map(gen, 2, 3, 4)};
  const auto g = merge_layers(maps, "x");
  auto entries = flatten_patches(g);
  std::shuffle(entries.begin(), entries.end(), gen);
  const auto back = assemble_grid(entries, g.extent(), "x");
  EXPECT_EQ(back.embeddings, g.embeddings);
  EXPECT_EQ(back.dim, g.dim);
}

TEST(PatchGrid, PureFunctionsAreBitReproducible) {
  std::mt19937 gen(11);
  const std::vector<FeatureMap> maps{random_map(gen, 3, 8, 8), random_map(gen, 5, 4, 4)};
  const auto a = make_patch_grid(maps, 3);
  const auto b = make_patch_grid(maps, 3);
  EXPECT_EQ(a.embeddings, b.embeddings);
}
