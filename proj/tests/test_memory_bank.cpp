#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "oracles.hpp"
#include "patchbank/memory_bank.hpp"

using namespace patchbank;

namespace {

PatchGrid random_grid(std::mt19937& gen, std::size_t h, std::size_t w, std::size_t dim, std::string id = "g") {
  std::normal_distribution<float> n(0.0f, 1.0f);
  PatchGrid g{h, w, dim, std::vector<float>(h * w * dim), std::move(id)};
  for (auto& v : g.embeddings) v = n(gen);
  return g;
}

// A bank of explicit points, one grid row per point.
MemoryBank bank_of(const std::vector<std::vector<float>>& pts) {
  PatchGrid g{1, pts.size(), pts.front().size(), {}, "pts"};
  for (const auto& p : pts) g.embeddings.insert(g.embeddings.end(), p.begin(), p.end());
  return build_bank(std::span<const PatchGrid>(&g, 1));
}

std::vector<std::vector<double>> as_double(const MemoryBank& bank) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto p = bank.point(i);
    out.emplace_back(p.begin(), p.end());
  }
  return out;
}

}  // namespace

TEST(BuildBank, CountsAndProvenance) {
  std::mt19937 gen(1);
  std::vector<PatchGrid> grids;
  for (int i = 0; i < 3; ++i) grids.push_back(random_grid(gen, 56, 56, 4, "img" + std::to_string(i)));
  const auto one = build_bank(std::span<const PatchGrid>(grids.data(), 1));
  EXPECT_EQ(one.size(), 3136u);
  const auto bank = build_bank(grids, {false, true, false});
  EXPECT_EQ(bank.size(), 3u * 3136u);
  EXPECT_EQ(bank.images()[1].image_id, "img1");
  EXPECT_TRUE(bank.images()[1].augmented);
  const auto& p = bank.provenance()[3136 + 57];
  EXPECT_EQ(p.image, 1u);
  EXPECT_EQ(p.row, 1u);
  EXPECT_EQ(p.col, 1u);
  const auto e = grids[1].embedding(1, 1);
  const auto q = bank.point(3136 + 57);
  EXPECT_TRUE(std::equal(e.begin(), e.end(), q.begin()));
}

TEST(BuildBank, SingleCellGrid) {
  const auto bank = bank_of({{1.0f, 2.0f}});
  EXPECT_EQ(bank.size(), 1u);
}

TEST(BuildBank, Errors) {
  EXPECT_THROW(build_bank({}), InvalidArgument);
  std::mt19937 gen(2);
  const std::vector<PatchGrid> mixed{random_grid(gen, 2, 2, 3), random_grid(gen, 2, 2, 4)};
  EXPECT_THROW(build_bank(mixed), InvalidArgument);
}

TEST(NnDistance, HandValuesAndErrors) {
  const auto bank = bank_of({{0.0f, 0.0f}});
  const std::vector<float> q{3.0f, 4.0f};
  EXPECT_FLOAT_EQ(nn_distance(bank, q), 5.0f);
  const std::vector<float> wrong{1.0f};
  EXPECT_THROW(nn_distance(bank, wrong), InvalidArgument);
  EXPECT_THROW(nn_distance(MemoryBank{}, q), InvalidState);
}

TEST(NnDistance, SelfDistanceIsZero) {
  std::mt19937 gen(3);
  const std::vector<PatchGrid> grids{random_grid(gen, 5, 5, 19)};
  const auto bank = build_bank(grids);
  for (std::size_t i = 0; i < bank.size(); ++i) EXPECT_EQ(nn_distance(bank, bank.point(i)), 0.0f);
}

TEST(NnDistance, MatchesBruteForceScan) {
  std::mt19937 gen(4);
  std::uniform_int_distribution<std::size_t> size(1, 500), dimd(1, 40);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = size(gen), dim = dimd(gen);
    const std::vector<PatchGrid> grids{random_grid(gen, 1, n, dim)};
    const auto bank = build_bank(grids);
    const auto ref = as_double(bank);
    for (int qi = 0; qi < 10; ++qi) {
      const auto qg = random_grid(gen, 1, 1, dim);
      const std::vector<double> qd(qg.embeddings.begin(), qg.embeddings.end());
      EXPECT_NEAR(nn_distance(bank, qg.embeddings), oracle::brute_nn(ref, qd), 1e-4);
    }
  }
}

TEST(GreedyCoreset, HandExampleWithForcedStart) {
  const auto bank = bank_of({{0, 0}, {0, 1}, {10, 0}});
  CoresetOptions opt;
  opt.start_index = 0;
  const auto core = greedy_coreset(bank, 2, 0, opt);
  ASSERT_TRUE(core.coreset());
  EXPECT_EQ(core.coreset()->selected_indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(core.point(1)[0], 10.0f);
}

TEST(GreedyCoreset, FullTargetSelectsEverything) {
  std::mt19937 gen(5);
  const std::vector<PatchGrid> grids{random_grid(gen, 4, 5, 3)};
  const auto bank = build_bank(grids);
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    auto idx = greedy_coreset(bank, bank.size(), seed).coreset()->selected_indices;
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(idx[i], i);
  }
}

TEST(GreedyCoreset, TargetOneIsSeededStart) {
  std::mt19937 gen(6);
  const std::vector<PatchGrid> grids{random_grid(gen, 6, 6, 3)};
  const auto bank = build_bank(grids);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Xoshiro256StarStar rng(seed);
    const auto expected = static_cast<std::size_t>(rng.bounded(bank.size()));
    EXPECT_EQ(greedy_coreset(bank, 1, seed).coreset()->selected_indices, std::vector<std::size_t>{expected});
  }
}

TEST(GreedyCoreset, SizeErrors) {
  const auto bank = bank_of({{0, 0}, {1, 1}});
  EXPECT_THROW(greedy_coreset(bank, 0, 0), InvalidArgument);
  EXPECT_THROW(greedy_coreset(bank, 3, 0), InvalidArgument);
}

TEST(GreedyCoreset, TiesGoToLowestIndex) {
  // Points 1..3 are all at distance 1 from point 0.
  const auto bank = bank_of({{0, 0}, {1, 0}, {0, 1}, {-1, 0}});
  CoresetOptions opt;
  opt.start_index = 0;
  EXPECT_EQ(greedy_coreset(bank, 2, 0, opt).coreset()->selected_indices, (std::vector<std::size_t>{0, 1}));
  // Duplicate points: every remaining distance is zero after the first pick.
  const auto dup = bank_of({{2, 2}, {2, 2}, {2, 2}});
  opt.jobs = 3;
  EXPECT_EQ(greedy_coreset(dup, 3, 0, opt).coreset()->selected_indices, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(GreedyCoreset, IndependentOfThreadCount) {
  std::mt19937 gen(7);
  // Quantized coordinates force many exact ties.
  PatchGrid g = random_grid(gen, 30, 30, 3);
  for (auto& v : g.embeddings) v = std::round(v);
  const std::vector<PatchGrid> grids{g};
  const auto bank = build_bank(grids);
  const auto ref = greedy_coreset(bank, 200, 11).coreset()->selected_indices;
  for (std::size_t jobs : {2u, 3u, 7u, 16u}) {
    CoresetOptions opt;
    opt.jobs = jobs;
    EXPECT_EQ(greedy_coreset(bank, 200, 11, opt).coreset()->selected_indices, ref) << jobs;
  }
}

TEST(GreedyCoreset, NeverGetsCloserThanFullBank) {
  std::mt19937 gen(8);
  const std::vector<PatchGrid> grids{random_grid(gen, 10, 10, 6)};
  const auto bank = build_bank(grids);
  const auto core = greedy_coreset(bank, 20, 3);
  for (int i = 0; i < 50; ++i) {
    const auto q = random_grid(gen, 1, 1, 6);
    EXPECT_LE(nn_distance(bank, q.embeddings), nn_distance(core, q.embeddings));
  }
}

TEST(GreedyCoreset, ProjectionKeepsOriginalEmbeddings) {
  std::mt19937 gen(9);
  const std::vector<PatchGrid> grids{random_grid(gen, 8, 8, 32)};
  const auto bank = build_bank(grids);
  CoresetOptions opt;
  opt.projection_dim = 8;
  const auto core = greedy_coreset(bank, 10, 4, opt);
  EXPECT_EQ(core.dim(), 32u);
  EXPECT_EQ(core.coreset()->projection_dim, 8u);
  for (std::size_t i = 0; i < core.size(); ++i) {
    const auto src = bank.point(core.coreset()->selected_indices[i]);
    const auto dst = core.point(i);
    EXPECT_TRUE(std::equal(src.begin(), src.end(), dst.begin()));
  }
}

TEST(ProjectForCoreset, IdentityAndErrors) {
  std::mt19937 gen(10);
  const std::vector<PatchGrid> grids{random_grid(gen, 3, 3, 5)};
  const auto bank = build_bank(grids);
  const auto id = project_for_coreset(bank, 5, 0, true);
  EXPECT_TRUE(std::equal(id.values.begin(), id.values.end(), bank.points().begin()));
  EXPECT_THROW(project_for_coreset(bank, 6, 0), InvalidArgument);
  EXPECT_THROW(project_for_coreset(bank, 0, 0), InvalidArgument);
  EXPECT_EQ(projection_matrix(5, 3, 42), projection_matrix(5, 3, 42));
  EXPECT_NE(projection_matrix(5, 3, 42), projection_matrix(5, 3, 43));
}

TEST(ProjectForCoreset, PreservesPairwiseDistancesStatistically) {
  std::mt19937 gen(12);
  const std::vector<PatchGrid> grids{random_grid(gen, 1, 1000, 512)};
  const auto bank = build_bank(grids);
  const auto proj = project_for_coreset(bank, 128, 7);
  std::size_t within = 0, total = 0;
  for (std::size_t i = 0; i < bank.size(); i += 7)
    for (std::size_t j = i + 1; j < bank.size(); j += 13) {
      const double orig = squared_l2_exact(bank.point(i), bank.point(j));
      const double p = squared_l2_exact(proj.point(i), proj.point(j));
      const double ratio = std::sqrt(p / orig);
      within += ratio >= 0.7 && ratio <= 1.3;
      ++total;
    }
  EXPECT_GE(static_cast<double>(within) / static_cast<double>(total), 0.99);
}

TEST(ScoreImage, PatchesInBankScoreZero) {
  std::mt19937 gen(13);
  const std::vector<PatchGrid> grids{random_grid(gen, 4, 4, 8, "a")};
  const auto bank = build_bank(grids);
  const auto r = score_image(bank, grids[0], {32, 32}, 4.0);
  EXPECT_EQ(r.image_score, 0.0f);
  for (float v : r.anomaly_map.values) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(r.anomaly_map.extent, (Extent{32, 32}));
  EXPECT_EQ(r.image_id, "a");
}

TEST(ScoreImage, SingleCellGridGivesConstantMap) {
  const auto bank = bank_of({{0.0f, 0.0f}});
  const PatchGrid g{1, 1, 2, {3.0f, 4.0f}, "q"};
  const auto r = score_image(bank, g, {9, 13}, 4.0);
  EXPECT_FLOAT_EQ(r.image_score, 5.0f);
  for (float v : r.anomaly_map.values) EXPECT_NEAR(v, 5.0f, 1e-5f);
}

TEST(ScoreImage, UpsampledMaxAtBottomRight) {
  const auto r = anomaly_from_patch_scores("x", ScoreMap{{2, 2}, {0, 0, 0, 10}}, {4, 4}, 0.0);
  EXPECT_EQ(r.image_score, 10.0f);
  const auto& m = r.anomaly_map;
  const auto max_it = std::max_element(m.values.begin(), m.values.end());
  EXPECT_EQ(max_it - m.values.begin(), 15);
  EXPECT_EQ(*max_it, 10.0f);
  EXPECT_FLOAT_EQ(m.at(2, 2), 5.625f);  // 0.75 * 0.75 * 10
}

TEST(ScoreImage, ImageScoreIsMaxOfRawPatchScoresNotSmoothed) {
  std::mt19937 gen(14);
  const std::vector<PatchGrid> train{random_grid(gen, 6, 6, 4)};
  const auto bank = build_bank(train);
  const auto q = random_grid(gen, 6, 6, 4);
  const auto r = score_image(bank, q, {48, 48}, 4.0);
  EXPECT_EQ(r.image_score, *std::max_element(r.patch_scores.values.begin(), r.patch_scores.values.end()));
  EXPECT_GT(r.image_score, *std::max_element(r.anomaly_map.values.begin(), r.anomaly_map.values.end()));
}

TEST(ScoreImage, InvariantUnderBankAndPatchOrder) {
  std::mt19937 gen(15);
  const std::vector<PatchGrid> train{random_grid(gen, 5, 5, 6)};
  const auto bank = build_bank(train);
  auto q = random_grid(gen, 5, 5, 6);
  const float ref = score_image(bank, q, {20, 20}, 0.0).image_score;

  auto entries = flatten_patches(q);
  std::reverse(entries.begin(), entries.end());
  std::vector<float> shuffled;
  for (const auto& e : entries) shuffled.insert(shuffled.end(), e.embedding.begin(), e.embedding.end());
  const PatchGrid reordered{5, 5, 6, shuffled, "r"};
  EXPECT_EQ(score_image(bank, reordered, {20, 20}, 0.0).image_score, ref);

  std::vector<std::size_t> perm(bank.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  const auto permuted = select_points(bank, perm, std::nullopt);
  EXPECT_EQ(score_image(permuted, q, {20, 20}, 0.0).image_score, ref);
}

TEST(ScoreImage, ParallelScoringMatchesSerial) {
  std::mt19937 gen(16);
  const std::vector<PatchGrid> train{random_grid(gen, 10, 10, 12)};
  const auto bank = build_bank(train);
  const auto q = random_grid(gen, 10, 10, 12);
  EXPECT_EQ(patch_scores(bank, q, 1).values, patch_scores(bank, q, 4).values);
}

TEST(ScoreImage, DimMismatchAndEmptyBank) {
  const auto bank = bank_of({{0.0f, 0.0f}});
  const PatchGrid g{1, 1, 3, {1, 2, 3}, "q"};
  EXPECT_THROW(score_image(bank, g, {4, 4}, 0.0), InvalidArgument);
  const PatchGrid g2{1, 1, 2, {1, 2}, "q"};
  EXPECT_THROW(score_image(MemoryBank{}, g2, {4, 4}, 0.0), InvalidArgument);
}

TEST(GaussianSmooth, KernelNormalizedAndConstantsPreserved) {
  const auto k = gaussian_kernel(4.0);
  EXPECT_EQ(k.size(), 2u * 16u + 1u);
  EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-12);
  std::vector<float> plane(30 * 17, 2.0f);
  gaussian_smooth(plane, {30, 17}, 4.0);
  for (float v : plane) EXPECT_NEAR(v, 2.0f, 1e-5f);
}

TEST(BankFile, RoundTripIsBitIdentical) {
  oracle::TempDir tmp("bank");
  std::mt19937 gen(17);
  const std::vector<PatchGrid> grids{random_grid(gen, 4, 4, 5, "a"), random_grid(gen, 4, 4, 5, "b__aug00")};
  const auto bank = build_bank(grids, {false, true}).with_attributes({{"note", "x"}});
  save_bank(bank, tmp / "full.pbnk");
  EXPECT_EQ(load_bank(tmp / "full.pbnk"), bank);

  const auto core = greedy_coreset(bank, 9, 3);
  save_bank(core, tmp / "core.pbnk");
  const auto back = load_bank(tmp / "core.pbnk");
  EXPECT_EQ(back, core);
  EXPECT_EQ(back.provenance(), core.provenance());
}

TEST(BankFile, FramingIsLittleEndianWithMagic) {
  const auto bytes = encode_bank(bank_of({{1.0f, -2.0f}}));
  EXPECT_EQ(bytes.substr(0, 4), "PBNK");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  EXPECT_EQ(bytes.substr(5, 3), std::string(3, '\0'));
  const std::uint32_t header_len = static_cast<unsigned char>(bytes[8]) | static_cast<unsigned char>(bytes[9]) << 8 |
                                   static_cast<unsigned char>(bytes[10]) << 16 |
                                   static_cast<unsigned char>(bytes[11]) << 24;
  const auto header = nlohmann::json::parse(bytes.substr(12, header_len));
  EXPECT_EQ(header.at("dim"), 2);
  EXPECT_EQ(header.at("count"), 1);
  EXPECT_TRUE(header.contains("coreset_meta"));
  ASSERT_EQ(bytes.size(), 12 + header_len + 8);
  float v[2];
  std::memcpy(v, bytes.data() + 12 + header_len, 8);
  EXPECT_EQ(v[0], 1.0f);
  EXPECT_EQ(v[1], -2.0f);
}

TEST(BankFile, TruncationAndVersionErrors) {
  const auto bytes = encode_bank(bank_of({{1.0f, 2.0f}, {3.0f, 4.0f}}));
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, std::size_t{20}, bytes.size() - 1,
                          bytes.size() - 4})
    EXPECT_THROW(decode_bank(bytes.substr(0, cut)), FormatError) << cut;
  std::string bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(decode_bank(bad_version), UnsupportedVersion);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_bank(bad_magic), FormatError);
  EXPECT_THROW(load_bank("/nonexistent/bank.pbnk"), IoError);
}
