#include <gtest/gtest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "support/tempdir.hpp"

namespace ecgtext {
namespace {

using nlohmann::json;
using testing::TempDir;

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<json> json_lines(const std::string& text) {
  std::vector<json> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(json::parse(line));
  return lines;
}

// Corpus, index and a micro pre-training run shared by the command tests.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir;
    ASSERT_EQ(run({"synth-data", "--n", "64", "--holdout", "400", "--length", "40", "--out", path("d")}).code, 0);
    ASSERT_EQ(run({"build-index", "--manifest", path("d/manifest.jsonl"), "--out", path("idx.bin")}).code, 0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string path(const std::string& rel) { return (*dir_ / rel).string(); }

  static std::vector<std::string> pretrain_args(const std::string& out, const std::string& steps, uint64_t seed = 7) {
    return {"pretrain", "--manifest", path("d/manifest.jsonl"), "--index", path("idx.bin"), "--out-dir", path(out),
            "--preset", "micro", "--steps", steps, "--batch", "4", "--k", "8", "--seed", std::to_string(seed)};
  }

  static TempDir* dir_;
};
TempDir* CliTest::dir_ = nullptr;

TEST_F(CliTest, SynthDataIsReproducible) {
  ASSERT_EQ(run({"synth-data", "--n", "64", "--holdout", "400", "--length", "40", "--out", path("d2")}).code, 0);
  EXPECT_EQ(testing::read_file(path("d/manifest.jsonl")), testing::read_file(path("d2/manifest.jsonl")));
  EXPECT_EQ(testing::read_file(path("d/heldout.jsonl")), testing::read_file(path("d2/heldout.jsonl")));
  EXPECT_EQ(testing::read_file(path("d/prompts.tsv")), testing::read_file(path("d2/prompts.tsv")));
}

TEST_F(CliTest, SynthDataAndIndexCounts) {
  const Result synth = run({"synth-data", "--n", "2000", "--classes", "4", "--seed", "7", "--length", "40", "--out",
                            path("big")});
  ASSERT_EQ(synth.code, 0) << synth.err;
  EXPECT_EQ(json_lines(testing::read_file(path("big/manifest.jsonl"))).size(), 2000u);
  EXPECT_EQ(json::parse(synth.out)["n_examples"], 2000);
  const Result index = run({"build-index", "--manifest", path("big/manifest.jsonl"), "--out", path("big.bin")});
  ASSERT_EQ(index.code, 0) << index.err;
  EXPECT_EQ(json::parse(index.out)["N"], 2000);
  ASSERT_EQ(run({"build-index", "--manifest", path("big/manifest.jsonl"), "--out", path("big2.bin")}).code, 0);
  EXPECT_EQ(testing::read_file(path("big.bin")), testing::read_file(path("big2.bin")));
}

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run({"synth-data", "--classes", "1", "--out", path("bad")}).code, 2);
  EXPECT_EQ(run({"build-index", "--manifest", path("nope.jsonl"), "--out", path("x.bin")}).code, 2);
  EXPECT_EQ(run({"synth-data", "--out", path("bad"), "--frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"teleport"}).code, 2);
  auto args = pretrain_args("bad", "5");
  args.push_back("--preset=huge");
  EXPECT_EQ(run(args).code, 2);
  EXPECT_EQ(run({"probe", "--checkpoint", path("idx.bin"), "--manifest", path("d/heldout.jsonl"), "--fraction", "0"})
                .code,
            2);
}

TEST_F(CliTest, HelpExitsCleanly) {
  const Result r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("pretrain"), std::string::npos);
}

TEST_F(CliTest, RuntimeFailuresExitWithOne) {
  testing::write_file(path("garbage.ckpt"), "not a checkpoint\n");
  const Result r = run({"zero-shot", "--checkpoint", path("garbage.ckpt"), "--manifest", path("d/heldout.jsonl"),
                        "--prompts", path("d/prompts.tsv")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("corrupt checkpoint"), std::string::npos) << r.err;
}

TEST_F(CliTest, PretrainWritesLogConfigAndCheckpoint) {
  const Result r = run(pretrain_args("run", "12"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto log = json_lines(testing::read_file(path("run/train_log.jsonl")));
  ASSERT_EQ(log.size(), 12u);
  const json config = json::parse(testing::read_file(path("run/config.json")));
  for (size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(log[i]["step"], i);
    EXPECT_EQ(log[i]["config_hash"], config["config_hash"]);
  }
  EXPECT_EQ(json::parse(r.out)["steps"], 12);
  EXPECT_TRUE(std::filesystem::exists(path("run/checkpoint.ckpt")));
  EXPECT_TRUE(std::filesystem::exists(path("run/metrics.json")));
}

TEST_F(CliTest, ResumeContinuesTheLog) {
  ASSERT_EQ(run(pretrain_args("full", "10")).code, 0);
  auto first = pretrain_args("part", "10");
  first.insert(first.end(), {"--checkpoint-every", "4"});
  ASSERT_EQ(run(first).code, 0);
  auto resumed = pretrain_args("resumed", "10");
  resumed.insert(resumed.end(), {"--resume", path("part/checkpoint_step4.ckpt")});
  ASSERT_EQ(run(resumed).code, 0);
  EXPECT_EQ(testing::read_file(path("resumed/train_log.jsonl")), testing::read_file(path("full/train_log.jsonl")));
}

TEST_F(CliTest, UntrainedModelScoresNearChance) {
  double sum = 0.0;
  const int seeds = 5;
  for (int s = 1; s <= seeds; ++s) {
    const std::string out = "untrained" + std::to_string(s);
    ASSERT_EQ(run(pretrain_args(out, "1", static_cast<uint64_t>(s))).code, 0);
    const Result r = run({"zero-shot", "--checkpoint", path(out + "/checkpoint.ckpt"), "--manifest",
                          path("d/heldout.jsonl"), "--prompts", path("d/prompts.tsv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const json m = json::parse(r.out);
    EXPECT_EQ(m["task"], "zero-shot");
    EXPECT_EQ(m["n_examples"], 400);
    const double a = m["auc_macro"];
    EXPECT_GE(a, 0.3);
    EXPECT_LE(a, 0.7);
    sum += a;
  }
  EXPECT_NEAR(sum / seeds, 0.5, 0.08);
}

TEST_F(CliTest, ZeroShotWithMappingAndOutputFile) {
  ASSERT_EQ(run(pretrain_args("zs", "2")).code, 0);
  std::istringstream prompts(testing::read_file(path("d/prompts.tsv")));
  json mapping = json::array();
  for (std::string line; std::getline(prompts, line);) {
    if (line.empty() || line[0] == '#') continue;
    const std::string name = line.substr(0, line.find('\t'));
    mapping.push_back({{"source", name}, {"target", mapping.empty() ? json(nullptr) : json("ANY")}});
  }
  testing::write_file(path("map.json"), mapping.dump());
  const Result r = run({"zero-shot", "--checkpoint", path("zs/checkpoint.ckpt"), "--manifest", path("d/heldout.jsonl"),
                        "--prompts", path("d/prompts.tsv"), "--mapping", path("map.json"), "--out", path("zs.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = json::parse(testing::read_file(path("zs.json")));
  EXPECT_EQ(m["per_class_auc"].size(), 1u);
  EXPECT_TRUE(m["per_class_auc"].contains("ANY"));
}

TEST_F(CliTest, ProbeEmitsOneRecordPerFraction) {
  ASSERT_EQ(run(pretrain_args("pr", "2")).code, 0);
  const Result r = run({"probe", "--checkpoint", path("pr/checkpoint.ckpt"), "--manifest", path("d/heldout.jsonl"),
                        "--prompts", path("d/prompts.tsv"), "--fraction", "0.01", "--fraction", "0.1", "--fraction",
                        "1.0", "--out", path("probe.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = json_lines(testing::read_file(path("probe.jsonl")));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0]["task"], "linear-probe@0.01");
  EXPECT_EQ(lines[1]["task"], "linear-probe@0.1");
  EXPECT_EQ(lines[2]["task"], "linear-probe@1");
  for (const auto& l : lines) {
    EXPECT_GE(l["auc_macro"].get<double>(), 0.0);
    EXPECT_LE(l["auc_macro"].get<double>(), 1.0);
  }
  EXPECT_EQ(json_lines(r.out), lines);
}

TEST_F(CliTest, LossTogglesStillEmitMetrics) {
  for (const auto& extra : std::vector<std::vector<std::string>>{{"--w-etm", "0"},
                                                                  {"--w-mlm", "0", "--w-mem", "0"},
                                                                  {"--no-n3s"},
                                                                  {"--ets-normalize", "--mem-masked-only"}}) {
    auto args = pretrain_args("toggle", "3");
    args.insert(args.end(), extra.begin(), extra.end());
    const Result r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const json m = json::parse(r.out);
    EXPECT_TRUE(std::isfinite(m["final_loss"]["total"].get<double>()));
    EXPECT_EQ(json_lines(testing::read_file(path("toggle/train_log.jsonl"))).size(), 3u);
  }
}

TEST_F(CliTest, ConfigFileOverridesAndFlagsWin) {
  testing::write_file(path("cfg.json"), R"({"batch_size": 6, "optimizer": {"peak_lr": 0.01}})");
  auto args = pretrain_args("cfg", "2");
  args.erase(args.begin() + 11, args.begin() + 13);  // drop --batch 4
  args.insert(args.end(), {"--config", path("cfg.json"), "--lr", "0.002"});
  ASSERT_EQ(run(args).code, 0);
  const json c = json::parse(testing::read_file(path("cfg/config.json")))["config"];
  EXPECT_EQ(c["batch_size"], 6);
  EXPECT_EQ(c["optimizer"]["peak_lr"], 0.002);
  testing::write_file(path("bad_cfg.json"), R"({"batch": 6})");
  args = pretrain_args("cfg2", "2");
  args.insert(args.end(), {"--config", path("bad_cfg.json")});
  EXPECT_EQ(run(args).code, 2);
}

}  // namespace
}  // namespace ecgtext
