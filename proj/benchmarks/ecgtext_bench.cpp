#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "ecgtext/n3s.hpp"
#include "ecgtext/trainer.hpp"

namespace ecgtext {
namespace {

Matrix<float> gaussian(Index rows, Index cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Matrix<float> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Exact farthest-k query over an N x 512 index.
void BM_TopKFarthest(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("r" + std::to_string(i));
  const EmbeddingIndex index(ids, gaussian(n, 512, 1), "bench");
  int q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.farthest_rows(q, 64));
    q = (q + 1) % n;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_TopKFarthest)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

// ECG encoder plus projection head on one desk-size signal.
void BM_EcgEmbedding(benchmark::State& state) {
  const Model<float> model(desk_model_config(64));
  const Matrix<float> signal = gaussian(state.range(0), 12, 2);
  for (auto _ : state) {
    Tape<float> tape;
    benchmark::DoNotOptimize(model.ecg_embedding(tape, signal).value().data());
  }
}
BENCHMARK(BM_EcgEmbedding)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

// One full optimisation step (forward, backward, AdamW) at the desk configuration.
void BM_TrainStep(benchmark::State& state) {
  SynthConfig sc;
  sc.n_examples = 128;
  sc.seed = 3;
  std::vector<PairedExample> examples = generate_synthetic_examples(sc);
  std::vector<std::string> texts;
  std::vector<std::pair<std::string, std::string>> reports;
  for (const auto& x : examples) {
    texts.push_back(x.report.normalized);
    reports.emplace_back(x.id, x.report.normalized);
  }
  Vocabulary vocab = Vocabulary::build(texts);
  EmbeddingIndex index = build_index(reports, HashingEmbedder(512));
  const TrainingData data(std::move(examples), std::move(vocab), std::move(index));
  PretrainConfig config;
  config.model = desk_model_config(data.vocab.size());
  config.optimizer.peak_lr = 1e-3;
  config.batch_size = static_cast<int>(state.range(0));
  config.schedule.total_steps = 1 << 30;
  Trainer trainer(config, data);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step().loss.total);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace ecgtext

BENCHMARK_MAIN();
