#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ecgtext/n3s.hpp"
#include "support/generators.hpp"
#include "support/tempdir.hpp"

namespace ecgtext {
namespace {

using testing::Gen;

EmbeddingIndex three_point_index() {
  Matrix<float> v(3, 2);
  v << 1, 0, 0, 1, -1, 0;
  return EmbeddingIndex({"a", "b", "c"}, v, "manual");
}

TEST(TopK, HandWorkedExample) {
  const auto index = three_point_index();
  EXPECT_EQ(top_k_farthest(index, "a", 1), (std::vector<std::string>{"c"}));
  EXPECT_EQ(top_k_farthest(index, "a", 2), (std::vector<std::string>{"c", "b"}));
  EXPECT_EQ(brute_force_farthest(index.ids(), index.vectors(), "a", 2), (std::vector<std::string>{"c", "b"}));
}

TEST(TopK, Errors) {
  const auto index = three_point_index();
  EXPECT_THROW(top_k_farthest(index, "zzz", 1), std::out_of_range);
  EXPECT_THROW(top_k_farthest(index, "a", 3), std::invalid_argument);
  EXPECT_THROW(top_k_farthest(index, "a", 0), std::invalid_argument);
}

TEST(TopK, DuplicateOfQueryIsNeverFarthest) {
  Matrix<float> v(4, 2);
  v << 1, 0, 1, 0, 0, 1, -1, 0;
  const EmbeddingIndex index({"q", "dup", "b", "c"}, v, "manual");
  EXPECT_EQ(top_k_farthest(index, "q", 2), (std::vector<std::string>{"c", "b"}));
  EXPECT_EQ(top_k_farthest(index, "q", 3).back(), "dup");
}

TEST(TopK, TiesBreakByAscendingId) {
  Matrix<float> v(4, 2);
  v << 1, 0, 0, 1, 0, -1, 0, 2;
  const EmbeddingIndex index({"q", "z", "m", "a"}, v, "manual");
  EXPECT_EQ(top_k_farthest(index, "q", 3), (std::vector<std::string>{"a", "m", "z"}));
}

Matrix<float> random_vectors(Gen& gen, int n, int d) { return gen.matrix<float>(n, d); }

std::vector<std::string> make_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("id" + std::to_string(i));
  return ids;
}

TEST(TopK, PropertyMatchesBruteForce) {
  Gen gen(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = gen.int_in(2, 60), d = gen.int_in(1, 16);
    Matrix<float> v = random_vectors(gen, n, d);
    // include exact duplicates to exercise ties
    if (n > 3) v.row(1) = v.row(2);
    const auto ids = make_ids(n);
    const EmbeddingIndex index(ids, v, "rand");
    for (int q = 0; q < n; ++q) {
      const int k = gen.int_in(1, n - 1);
      const auto got = top_k_farthest(index, ids[size_t(q)], k);
      ASSERT_EQ(got, brute_force_farthest(ids, v, ids[size_t(q)], k));
      ASSERT_EQ(std::count(got.begin(), got.end(), ids[size_t(q)]), 0);
    }
  }
}

TEST(TopK, AllOthersWhenKIsNMinusOne) {
  Gen gen(2);
  const auto ids = make_ids(20);
  const EmbeddingIndex index(ids, random_vectors(gen, 20, 5), "rand");
  auto got = top_k_farthest(index, "id7", 19);
  std::sort(got.begin(), got.end());
  auto want = ids;
  want.erase(want.begin() + 7);
  std::sort(want.begin(), want.end());
  EXPECT_EQ(got, want);
}

TEST(TopK, PropertyScalingVectorsChangesNothing) {
  Gen gen(3);
  const auto ids = make_ids(40);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix<float> v = random_vectors(gen, 40, 6);
    Matrix<float> scaled = v;
    // powers of two keep the scaled rows exactly proportional in float
    for (Index r = 0; r < scaled.rows(); ++r) scaled.row(r) *= std::ldexp(1.0f, gen.int_in(-4, 4));
    const EmbeddingIndex a(ids, v, "x"), b(ids, scaled, "x");
    for (const auto& q : ids) ASSERT_EQ(top_k_farthest(a, q, 10), top_k_farthest(b, q, 10));
  }
}

TEST(Index, RejectsBadRows) {
  Matrix<float> v(2, 2);
  v << 1, 0, 0, 0;
  EXPECT_THROW(EmbeddingIndex({"a", "b"}, v, "x"), std::invalid_argument);
  v << 1, 0, NAN, 0;
  EXPECT_THROW(EmbeddingIndex({"a", "b"}, v, "x"), std::invalid_argument);
  v << 1, 0, 0, 1;
  EXPECT_THROW(EmbeddingIndex({"a", "a"}, v, "x"), std::invalid_argument);
}

TEST(HashingEmbedder, DeterministicOrderFreeAndUnitNorm) {
  const HashingEmbedder e(64);
  const auto a = e("sinus rhythm normal ecg");
  EXPECT_EQ(a, e("sinus rhythm normal ecg"));
  EXPECT_EQ(a, e("normal ecg sinus rhythm"));
  double norm = 0;
  for (float x : a) norm += double(x) * x;
  EXPECT_NEAR(norm, 1.0, 1e-6);
  EXPECT_NE(a, e("atrial fibrillation"));
  const auto z = e("");
  EXPECT_TRUE(std::all_of(z.begin(), z.end(), [](float x) { return x == 0.0f; }));
  EXPECT_EQ(e.id(), "hashing-bow-64");
}

TEST(HashingEmbedder, PropertyNonEmptyTextNeverEmbedsToZero) {
  const HashingEmbedder e(8);  // narrow width forces many collisions
  Gen gen(12);
  for (int trial = 0; trial < 5000; ++trial) {
    std::string text = gen.word();
    for (int i = gen.int_in(0, 5); i > 0; --i) text += " " + gen.word();
    double norm = 0;
    for (float x : e(text)) norm += double(x) * x;
    ASSERT_NEAR(norm, 1.0, 1e-6) << text;
  }
}

TEST(BuildIndex, IdenticalTextsGiveIdenticalRowsAndEmptyTextFails) {
  const HashingEmbedder e(32);
  const auto index = build_index({{"x", "left axis deviation"}, {"y", "left axis deviation"}, {"z", "normal ecg"}}, e);
  EXPECT_EQ(index.vectors().row(0), index.vectors().row(1));
  EXPECT_EQ(index.embedder_id(), "hashing-bow-32");
  EXPECT_THROW(build_index({{"x", "normal"}, {"y", ""}}, e), std::invalid_argument);
  const TextEmbedder broken = [](std::string_view) { return std::vector<float>{1.0f, NAN}; };
  EXPECT_THROW(build_index({{"x", "a"}}, broken, "broken"), std::invalid_argument);
}

TEST(BuildIndex, ThousandReportsAtFullWidth) {
  Gen gen(4);
  std::vector<std::pair<std::string, std::string>> reports;
  for (int i = 0; i < 1000; ++i) reports.emplace_back("r" + std::to_string(i), gen.word() + " " + gen.word());
  const auto index = build_index(reports, HashingEmbedder(512));
  EXPECT_EQ(index.size(), 1000u);
  EXPECT_EQ(index.dim(), 512);
}

TEST(IndexFile, RoundTripIsBitExact) {
  testing::TempDir dir;
  Gen gen(5);
  const EmbeddingIndex index(make_ids(30), random_vectors(gen, 30, 7), "rand-7");
  save_index(index, dir / "index.bin", "abc123");
  const auto back = load_index(dir / "index.bin");
  EXPECT_TRUE(back == index);
  EXPECT_EQ(back.embedder_id(), "rand-7");
  EXPECT_EQ(back.ids(), index.ids());
}

TEST(IndexFile, TruncatedPayloadIsRejected) {
  testing::TempDir dir;
  Gen gen(6);
  save_index(EmbeddingIndex(make_ids(5), random_vectors(gen, 5, 3), "r"), dir / "i.bin");
  std::string bytes = testing::read_file(dir / "i.bin");
  testing::write_file(dir / "i.bin", bytes.substr(0, bytes.find('\n') + 10));
  EXPECT_THROW(load_index(dir / "i.bin"), std::runtime_error);
  testing::write_file(dir / "j.bin", "garbage\n");
  EXPECT_THROW(load_index(dir / "j.bin"), std::runtime_error);
}

EmbeddingIndex synthetic_index(std::vector<PairedExample>* out = nullptr) {
  SynthConfig c;
  c.n_examples = 200;
  c.length_l = 20;
  c.n_leads = 2;
  auto xs = generate_synthetic_examples(c);
  std::vector<std::pair<std::string, std::string>> reports;
  for (const auto& x : xs) reports.emplace_back(x.id, x.report.normalized);
  if (out) *out = xs;
  return build_index(reports, HashingEmbedder(512));
}

std::vector<std::string> first_ids(const EmbeddingIndex& index, int b) {
  return {index.ids().begin(), index.ids().begin() + b};
}

TEST(SampleNegatives, HalfOfFourIsTwo) {
  const auto index = synthetic_index();
  N3SConfig cfg;
  cfg.k = 16;
  Rng rng(1);
  const auto sub = sample_negatives(index, first_ids(index, 4), cfg, rng);
  EXPECT_EQ(sub.positions.size(), 2u);
  EXPECT_EQ(sub.replacement_ids.size(), 2u);
  for (int p : sub.positions) {
    EXPECT_EQ(sub.labels.match[size_t(p)], 0);
    EXPECT_EQ(sub.labels.pairwise(p, p), -1.0f);
  }
  int matches = 0;
  for (auto m : sub.labels.match) matches += m;
  EXPECT_EQ(matches, 2);
}

TEST(SampleNegatives, ZeroFractionLeavesBatchUnchanged) {
  const auto index = synthetic_index();
  N3SConfig cfg;
  cfg.k = 16;
  cfg.negative_fraction = 0.0;
  Rng rng(1);
  const auto sub = sample_negatives(index, first_ids(index, 6), cfg, rng);
  EXPECT_TRUE(sub.positions.empty());
  EXPECT_EQ(sub.labels.match, std::vector<uint8_t>(6, 1));
  EXPECT_EQ(sub.labels.pairwise, PairLabels::identity(6).pairwise);
}

TEST(SampleNegatives, ReplacementsComeFromTopKAndDifferInText) {
  std::vector<PairedExample> xs;
  const auto index = synthetic_index(&xs);
  std::unordered_map<std::string, const PairedExample*> corpus;
  for (const auto& x : xs) corpus.emplace(x.id, &x);
  N3SConfig cfg;
  cfg.k = 32;
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<PairedExample> batch(xs.begin() + trial, xs.begin() + trial + 8);
    auto [swapped, sub] = sample_negatives(index, batch, corpus, cfg, rng);
    ASSERT_EQ(sub.positions.size(), 4u);
    for (size_t k = 0; k < sub.positions.size(); ++k) {
      const auto p = static_cast<size_t>(sub.positions[k]);
      const auto top = top_k_farthest(index, batch[p].id, cfg.k);
      ASSERT_NE(std::find(top.begin(), top.end(), sub.replacement_ids[k]), top.end());
      ASSERT_NE(swapped[p].report.normalized, batch[p].report.normalized);
      ASSERT_EQ(swapped[p].ecg, batch[p].ecg);
    }
  }
}

TEST(SampleNegatives, SameSeedIsReproducible) {
  const auto index = synthetic_index();
  N3SConfig cfg;
  cfg.k = 16;
  for (auto strategy : {NegativeStrategy::kFarthest, NegativeStrategy::kRandom}) {
    Rng a(77), b(77);
    for (int i = 0; i < 20; ++i) {
      const auto sa = sample_negatives(index, first_ids(index, 16), cfg, a, strategy);
      const auto sb = sample_negatives(index, first_ids(index, 16), cfg, b, strategy);
      ASSERT_EQ(sa.positions, sb.positions);
      ASSERT_EQ(sa.replacement_ids, sb.replacement_ids);
    }
  }
}

TEST(SampleNegatives, RandomStrategyNeverPicksSelf) {
  const auto index = synthetic_index();
  N3SConfig cfg;
  cfg.k = 16;
  cfg.negative_fraction = 1.0;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto ids = first_ids(index, 8);
    const auto sub = sample_negatives(index, ids, cfg, rng, NegativeStrategy::kRandom);
    for (size_t k = 0; k < sub.positions.size(); ++k) ASSERT_NE(sub.replacement_ids[k], ids[size_t(sub.positions[k])]);
  }
}

TEST(SampleNegatives, Errors) {
  const auto index = three_point_index();
  N3SConfig cfg;
  cfg.k = 3;
  Rng rng(1);
  EXPECT_THROW(sample_negatives(index, {"a"}, cfg, rng), std::invalid_argument);
  cfg.k = 1;
  EXPECT_THROW(sample_negatives(index, std::vector<std::string>{}, cfg, rng), std::invalid_argument);
  cfg.negative_fraction = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace ecgtext
