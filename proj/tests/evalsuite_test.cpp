#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ecgtext/evalsuite.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

namespace ecgtext {
namespace {

using testing::Gen;
using testing::TempDir;

// ---- AUC ---------------------------------------------------------------------

TEST(Auc, WorkedExamples) {
  EXPECT_EQ(*auc({0.8, 0.9, 0.6, 0.1}, {1, 0, 1, 0}), 0.5);
  EXPECT_EQ(*auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75);
  EXPECT_EQ(*auc({1, 2, 3, 4}, {0, 0, 1, 1}), 1.0);
  EXPECT_EQ(*auc({4, 3, 2, 1}, {0, 0, 1, 1}), 0.0);
  EXPECT_EQ(*auc({0.5, 0.5, 0.5}, {0, 1, 1}), 0.5);
  EXPECT_EQ(*auc({0.2, 0.5, 0.5}, {0, 0, 1}), 0.75);
}

TEST(Auc, UndefinedWithoutBothClasses) {
  EXPECT_FALSE(auc({1, 2}, {1, 1}).has_value());
  EXPECT_FALSE(auc({1, 2}, {0, 0}).has_value());
  EXPECT_FALSE(auc({}, {}).has_value());
  EXPECT_THROW(auc({1, 2}, {1}), std::invalid_argument);
}

TEST(Auc, PropertyMatchesPairwiseOracle) {
  Gen g(21);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = g.int_in(2, 60);
    const bool coarse = g.coin();  // coarse scores produce many ties
    std::vector<double> s(static_cast<size_t>(n));
    std::vector<uint8_t> y(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[i] = coarse ? g.int_in(0, 4) : g.normal();
      y[i] = g.coin(0.3) ? 1 : 0;
    }
    const auto got = auc(s, y);
    const bool both = std::count(y.begin(), y.end(), 1) > 0 && std::count(y.begin(), y.end(), 0) > 0;
    ASSERT_EQ(got.has_value(), both);
    if (both) ASSERT_NEAR(*got, testing::oracle_auc(s, y), 1e-12) << "trial " << trial;
  }
}

TEST(Auc, PropertyInvariantUnderMonotoneTransforms) {
  Gen g(22);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = g.int_in(4, 50);
    std::vector<double> s(n), t(n);
    std::vector<uint8_t> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = g.int_in(-3, 3) * 0.5 + (g.coin() ? g.normal(0.1) : 0.0);
      y[i] = static_cast<uint8_t>(i % 2);
      t[i] = std::exp(2.0 * s[i]) + 3.0;
    }
    ASSERT_EQ(*auc(s, y), *auc(t, y));
    std::vector<double> flipped(n);
    std::transform(s.begin(), s.end(), flipped.begin(), [](double v) { return -v; });
    ASSERT_NEAR(*auc(flipped, y), 1.0 - *auc(s, y), 1e-12);
  }
}

TEST(Auc, PermutedLabelsGiveChance) {
  Gen g(23);
  const int n = 4000;
  std::vector<double> s(n);
  std::vector<uint8_t> y(n);
  for (int i = 0; i < n; ++i) {
    s[i] = g.normal();
    y[i] = s[i] > 0 ? 1 : 0;
  }
  EXPECT_EQ(*auc(s, y), 1.0);
  std::shuffle(y.begin(), y.end(), g.rng());
  EXPECT_NEAR(*auc(s, y), 0.5, 0.05);
}

TEST(AucMacro, ExcludesDegenerateClasses) {
  Matrix<double> s(4, 3);
  s << 0.9, 0.1, 0.5,  //
      0.8, 0.2, 0.5,   //
      0.1, 0.7, 0.5,   //
      0.2, 0.9, 0.5;
  LabelMatrix y(4, 3);
  y << 1, 0, 0,  //
      1, 0, 0,   //
      0, 0, 0,   //
      0, 1, 0;
  const MacroAuc m = auc_macro(s, y);
  EXPECT_EQ(m.excluded, (std::vector<int>{2}));
  ASSERT_TRUE(m.per_class[0] && m.per_class[1]);
  EXPECT_EQ(*m.per_class[0], 1.0);
  EXPECT_EQ(*m.per_class[1], 1.0);
  EXPECT_FALSE(m.per_class[2]);
  EXPECT_EQ(m.macro, 1.0);
  y.col(0).setZero();
  y.col(1).setZero();
  EXPECT_THROW(auc_macro(s, y), std::invalid_argument);
}

TEST(AucMacro, PropertyIsMeanOfDefinedClasses) {
  Gen g(24);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = g.int_in(3, 30), k = g.int_in(1, 5);
    Matrix<double> s = g.matrix<double>(n, k);
    LabelMatrix y(n, k);
    for (Index i = 0; i < y.size(); ++i) y.data()[i] = g.coin(0.4) ? 1 : 0;
    double sum = 0;
    int used = 0;
    for (int c = 0; c < k; ++c) {
      std::vector<double> col;
      std::vector<uint8_t> lab;
      for (int i = 0; i < n; ++i) {
        col.push_back(s(i, c));
        lab.push_back(y(i, c));
      }
      const int pos = std::accumulate(lab.begin(), lab.end(), 0);
      if (pos == 0 || pos == n) continue;
      sum += testing::oracle_auc(col, lab);
      ++used;
    }
    if (used == 0) {
      EXPECT_THROW(auc_macro(s, y), std::invalid_argument);
    } else {
      EXPECT_NEAR(auc_macro(s, y).macro, sum / used, 1e-12);
    }
  }
}

// ---- linear probe --------------------------------------------------------------

struct ProbeData {
  Matrix<double> x;
  LabelMatrix y;
};

ProbeData probe_data(int n, int d, int k, bool separable, uint64_t seed) {
  Gen g(seed);
  ProbeData out{g.matrix<double>(n, d), LabelMatrix::Zero(n, k)};
  for (int i = 0; i < n; ++i) {
    const int c = i % k;
    out.y(i, c) = 1;
    if (separable) out.x(i, c) += 6.0;
  }
  return out;
}

TEST(LinearProbe, SeparableClassesReachPerfectAuc) {
  const ProbeData d = probe_data(400, 10, 4, true, 31);
  const ProbeResult r = linear_probe(d.x, d.y, 1.0, 5);
  EXPECT_NEAR(r.auc.macro, 1.0, 0.01);
  EXPECT_EQ(r.n_train + r.n_test, 400);
}

TEST(LinearProbe, RandomFeaturesStayNearChance) {
  const ProbeData d = probe_data(2000, 16, 2, false, 32);
  const ProbeResult r = linear_probe(d.x, d.y, 1.0, 5);
  EXPECT_GE(r.auc.macro, 0.45);
  EXPECT_LE(r.auc.macro, 0.55);
}

TEST(LinearProbe, SmallFractionsTrainOnFewerRowsAndReproduce) {
  const ProbeData d = probe_data(1000, 8, 5, true, 33);
  const ProbeResult full = linear_probe(d.x, d.y, 1.0, 9);
  const ProbeResult tiny = linear_probe(d.x, d.y, 0.01, 9);
  EXPECT_LT(tiny.n_train, full.n_train);
  EXPECT_GE(tiny.n_train, 5);  // one per class at least
  EXPECT_EQ(tiny.n_test, full.n_test);
  EXPECT_GE(full.auc.macro + 1e-12, tiny.auc.macro - 0.05);
  const ProbeResult again = linear_probe(d.x, d.y, 0.01, 9);
  EXPECT_EQ(again.auc.macro, tiny.auc.macro);
  EXPECT_THROW(linear_probe(d.x, d.y, 0.0, 9), std::invalid_argument);
  EXPECT_THROW(linear_probe(d.x, d.y, 1.5, 9), std::invalid_argument);
}

TEST(StratifiedSubsample, PropertyCoversEveryClassAndScales) {
  Gen g(34);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = g.int_in(5, 200), k = g.int_in(1, 6);
    LabelMatrix y = LabelMatrix::Zero(n, k);
    std::vector<int> count(k, 0);
    for (int i = 0; i < n; ++i) {
      const int c = g.int_in(0, k - 1);
      y(i, c) = 1;
      ++count[c];
    }
    const double f = g.real_in(0.01, 1.0);
    const auto rows = stratified_subsample(y, f, 7);
    ASSERT_TRUE(std::is_sorted(rows.begin(), rows.end()));
    ASSERT_EQ(std::adjacent_find(rows.begin(), rows.end()), rows.end());
    std::vector<int> got(k, 0);
    for (int r : rows) {
      for (int c = 0; c < k; ++c)
        if (y(r, c)) ++got[c];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] == 0) continue;
      ASSERT_GE(got[c], 1);
      ASSERT_EQ(got[c], std::max(1, static_cast<int>(std::ceil(f * count[c] - 1e-9))));
    }
    ASSERT_EQ(stratified_subsample(y, f, 7), rows);
  }
}

// ---- label mapping -------------------------------------------------------------

TEST(MapLabels, IdentityNoneAndMerge) {
  ScoreMatrix src;
  src.class_names = {"a", "b", "c"};
  src.scores.resize(3, 3);
  src.scores << 0.1, 0.7, 0.3,  //
      0.9, 0.2, 0.4,            //
      0.5, 0.6, 0.8;
  src.labels.resize(3, 3);
  src.labels << 1, 0, 0,  //
      0, 1, 1,            //
      0, 0, 1;

  LabelMapping identity{{{"a", "a"}, {"b", "b"}, {"c", "c"}}};
  const ScoreMatrix id = map_labels(identity, src);
  EXPECT_EQ(id.class_names, src.class_names);
  EXPECT_EQ(id.scores, src.scores);
  EXPECT_EQ(id.labels, src.labels);

  LabelMapping drop{{{"a", "x"}, {"b", std::nullopt}, {"c", "y"}}};
  const ScoreMatrix dropped = map_labels(drop, src);
  EXPECT_EQ(dropped.class_names, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(dropped.scores.col(0), src.scores.col(0));
  EXPECT_EQ(dropped.scores.col(1), src.scores.col(2));

  LabelMapping merge{{{"a", "m"}, {"b", "m"}, {"c", std::nullopt}}};
  const ScoreMatrix merged = map_labels(merge, src);
  ASSERT_EQ(merged.class_names, (std::vector<std::string>{"m"}));
  EXPECT_EQ(merged.scores(0, 0), 0.7);
  EXPECT_EQ(merged.scores(1, 0), 0.9);
  EXPECT_EQ(merged.scores(2, 0), 0.6);
  EXPECT_EQ(merged.labels(0, 0), 1);
  EXPECT_EQ(merged.labels(1, 0), 1);
  EXPECT_EQ(merged.labels(2, 0), 0);

  LabelMapping partial{{{"a", "a"}}};
  EXPECT_THROW(map_labels(partial, src), std::invalid_argument);
  LabelMapping dup{{{"a", "a"}, {"a", "b"}}};
  EXPECT_THROW(dup.validate(), std::invalid_argument);
}

TEST(MapLabels, ReadsJsonMapping) {
  TempDir dir;
  testing::write_file(dir / "m.json", R"([{"source": "AFIB", "target": "AF"}, {"source": "NORM", "target": null}])");
  const LabelMapping m = read_label_mapping(dir / "m.json");
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(m.pairs[0].second, std::optional<std::string>("AF"));
  EXPECT_FALSE(m.pairs[1].second);
  testing::write_file(dir / "bad.json", R"([{"source": "AFIB"}])");
  EXPECT_THROW(read_label_mapping(dir / "bad.json"), std::invalid_argument);
}

// ---- zero-shot -----------------------------------------------------------------

TEST(Cosine, ScaleInvariantAndBounded) {
  Gen g(41);
  const Matrix<double> e = g.matrix<double>(6, 5), t = g.matrix<double>(3, 5);
  const Matrix<double> s = cosine_scores(e, t);
  Matrix<double> scaled_e = e;
  for (Index i = 0; i < 6; ++i) scaled_e.row(i) *= g.real_in(0.1, 50.0);
  const Matrix<double> s2 = cosine_scores(scaled_e, 3.0 * t);
  EXPECT_LE((s - s2).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(s.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  const Matrix<double> self = cosine_scores(t, t);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(self(i, i), 1.0, 1e-12);
  EXPECT_THROW(cosine_scores(e, g.matrix<double>(3, 4)), std::invalid_argument);
}

TEST(ZeroShot, ScoresAreCosinesOfModelEmbeddings) {
  const Vocabulary vocab = Vocabulary::build({"atrial fibrillation", "normal sinus rhythm"});
  const Model<float> model(micro_model_config(vocab.size()));
  Gen g(42);
  std::vector<Matrix<float>> signals;
  for (int i = 0; i < 5; ++i) signals.push_back(g.signal(40, 12).samples);
  const ClassPromptSet prompts{{"AFIB", "NORM"}, {"atrial fibrillation", "normal sinus rhythm"}};
  const Matrix<double> s = zero_shot_scores(model, signals, prompts, vocab);
  ASSERT_EQ(s.rows(), 5);
  ASSERT_EQ(s.cols(), 2);
  const Matrix<double> expected =
      cosine_scores(extract_features(model, signals), prompt_embeddings(model, prompts, vocab));
  EXPECT_EQ(s, expected);
  EXPECT_LE(s.cwiseAbs().maxCoeff(), 1.0 + 1e-9);
}

TEST(Prompts, RoundTripAndErrors) {
  TempDir dir;
  const ClassPromptSet p{{"AFIB", "NORM"}, {"atrial fibrillation", "normal sinus rhythm"}};
  write_prompts(p, dir / "p.tsv");
  const ClassPromptSet back = read_prompts(dir / "p.tsv");
  EXPECT_EQ(back.class_names, p.class_names);
  EXPECT_EQ(back.descriptions, p.descriptions);
  testing::write_file(dir / "c.tsv", "# comment\n\nAFIB\tatrial fibrillation\n");
  EXPECT_EQ(read_prompts(dir / "c.tsv").size(), 1u);
  testing::write_file(dir / "bad.tsv", "AFIB atrial fibrillation\n");
  EXPECT_THROW(read_prompts(dir / "bad.tsv"), std::invalid_argument);
  EXPECT_THROW(read_prompts(dir / "missing.tsv"), std::runtime_error);
  EXPECT_THROW((ClassPromptSet{{"A"}, {""}}.validate()), std::invalid_argument);
}

TEST(Metrics, JsonRecord) {
  MacroAuc m;
  m.macro = 0.75;
  m.per_class = {0.5, std::nullopt, 1.0};
  m.excluded = {1};
  const auto j = nlohmann::json::parse(metrics_json("zero_shot", m, {"a", "b", "c"}, 12, "abcd"));
  EXPECT_EQ(j["task"], "zero_shot");
  EXPECT_EQ(j["auc_macro"], 0.75);
  EXPECT_EQ(j["per_class_auc"]["a"], 0.5);
  EXPECT_TRUE(j["per_class_auc"]["b"].is_null());
  EXPECT_EQ(j["n_examples"], 12);
  EXPECT_EQ(j["config_hash"], "abcd");
  EXPECT_THROW(metrics_json("t", m, {"a"}, 1, ""), std::invalid_argument);
}

TEST(OneHot, BuildsAndValidates) {
  const LabelMatrix y = one_hot({2, 0, 1}, 3);
  EXPECT_EQ(y(0, 2), 1);
  EXPECT_EQ(y.cast<int>().sum(), 3);
  EXPECT_THROW(one_hot({3}, 3), std::out_of_range);
}

}  // namespace
}  // namespace ecgtext
