#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ecgtext/masking.hpp"
#include "ecgtext/model.hpp"
#include "ecgtext/n3s.hpp"

namespace ecgtext {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
  double peak_lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double weight_decay = 0.01;

  void validate() const;
};

struct ScheduleConfig {
  int64_t total_steps = 3000;
  double warmup_ratio = 0.1;
  double hold_ratio = 0.4;
  double decay_ratio = 0.5;
  double init_lr_scale = 0.01;
  double final_lr_scale = 0.05;

  void validate() const;
  int64_t warmup_steps() const;
  int64_t hold_steps() const;
};

// Linear warmup from init_lr_scale * peak, constant hold, exponential decay to
// final_lr_scale * peak at total_steps. Throws outside [0, total_steps].
double tri_stage_lr(int64_t step, const ScheduleConfig& schedule, double peak_lr);

// Adam with decoupled weight decay: p <- p - lr * wd * p, then the Adam step.
// Parameters created with decay=false (biases, norms, modality and mask
// embeddings, ETS scale/bias) are never decayed.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const OptimizerConfig& config, const ParameterSet<float>& params);

  void step(ParameterSet<float>& params, double lr);

  int64_t step_count() const { return t_; }
  const std::vector<Matrix<float>>& first_moments() const { return m_; }
  const std::vector<Matrix<float>>& second_moments() const { return v_; }
  void restore(int64_t t, std::vector<Matrix<float>> m, std::vector<Matrix<float>> v);

 private:
  OptimizerConfig config_;
  int64_t t_ = 0;
  std::vector<Matrix<float>> m_;
  std::vector<Matrix<float>> v_;
};

std::vector<std::string> decay_excluded(const ParameterSet<float>& params);

struct PretrainConfig {
  ModelConfig model;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  MaskConfig mask;
  N3SConfig n3s;
  LossWeights weights;
  int batch_size = 16;
  uint64_t seed = 7;
  bool use_n3s = true;  // false: negatives drawn uniformly from the corpus

  void validate() const;
};

// Canonical JSON (sorted keys, compact). Round-trips through config_from_json.
std::string config_to_json(const PretrainConfig& config);
// Keys present in `json` override `base`; unknown keys are rejected.
PretrainConfig config_from_json(std::string_view json, const PretrainConfig& base = {});
// First 16 hex digits of SHA-256 over the canonical JSON.
std::string config_hash(const PretrainConfig& config);
std::string sha256_hex(std::string_view bytes);

// Corpus, vocabulary and negative-sampling index used for pre-training.
struct TrainingData {
  std::vector<PairedExample> examples;
  Vocabulary vocab;
  EmbeddingIndex index;

  TrainingData(std::vector<PairedExample> examples, Vocabulary vocab, EmbeddingIndex index);
  const PairedExample& by_id(const std::string& id) const;

 private:
  std::unordered_map<std::string, size_t> by_id_;
};

// Deterministic per-batch stream derived from (seed, step).
Rng batch_rng(uint64_t seed, int64_t step);

// Sampling, negative substitution, ECG corruption and MLM masking for one step.
TrainingBatch build_batch(const TrainingData& data, const PretrainConfig& config, int64_t step,
                          Substitution* substitution = nullptr);

struct StepRecord {
  int64_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
  double etm_accuracy = 0.0;
};

// One JSONL line: step, lr, mlm, mem, etm, ets, total, etm_acc, config_hash.
std::string step_record_json(const StepRecord& record, const std::string& config_hash);

struct StepHooks {
  std::function<void(ParameterSet<float>&)> after_backward;
};

class Trainer {
 public:
  Trainer(const PretrainConfig& config, const TrainingData& data);

  // Runs one optimisation step. Throws TrainingError (naming the loss part or
  // parameter) on a non-finite loss or gradient; parameters stay unchanged then.
  StepRecord train_step(const StepHooks& hooks = {});
  // Steps until `until` (capped at total_steps); `on_step` sees every record.
  void run(int64_t until, const std::function<void(const StepRecord&)>& on_step = {});

  void save_checkpoint(const std::filesystem::path& path) const;
  // Restores parameters, moments, step and history; the config hash must match.
  void load_checkpoint(const std::filesystem::path& path);

  int64_t step() const { return step_; }
  const std::vector<StepRecord>& history() const { return history_; }
  const PretrainConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  Model<float>& model() { return *model_; }
  const Model<float>& model() const { return *model_; }
  const AdamW& optimizer() const { return optimizer_; }

 private:
  PretrainConfig config_;
  std::string hash_;
  const TrainingData& data_;
  std::unique_ptr<Model<float>> model_;
  AdamW optimizer_;
  int64_t step_ = 0;
  std::vector<StepRecord> history_;
};

// Checkpoint contents readable without a corpus (evaluation tools).
struct Checkpoint {
  PretrainConfig config;
  std::string config_hash;
  int64_t step = 0;
  std::vector<std::string> vocab_words;
  std::vector<std::string> names;
  std::vector<Matrix<float>> values;
  std::vector<Matrix<float>> first_moments;
  std::vector<Matrix<float>> second_moments;
  int64_t adam_steps = 0;
  std::vector<StepRecord> history;
};

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);
std::unique_ptr<Model<float>> restore_model(const Checkpoint& checkpoint);

}  // namespace ecgtext
