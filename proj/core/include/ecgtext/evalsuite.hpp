#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecgtext/model.hpp"

namespace ecgtext {

using LabelMatrix = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ClassPromptSet {
  std::vector<std::string> class_names;
  std::vector<std::string> descriptions;

  size_t size() const { return class_names.size(); }
  void validate() const;
};

// One "class_name<TAB>description" per line; blank lines and lines starting
// with '#' are skipped.
ClassPromptSet read_prompts(const std::filesystem::path& path);
void write_prompts(const ClassPromptSet& prompts, const std::filesystem::path& path);

struct ScoreMatrix {
  std::vector<std::string> class_names;
  Matrix<double> scores;  // N x K
  LabelMatrix labels;     // N x K, multi-label

  void validate() const;
};

// One-hot labels from latent class indices.
LabelMatrix one_hot(const std::vector<int>& classes, int n_classes);

// Projection-head ECG embeddings x', one row per signal, no masking.
Matrix<double> extract_features(const Model<float>& model, const std::vector<Matrix<float>>& signals);
// Projection-head text embeddings t', one row per description.
Matrix<double> prompt_embeddings(const Model<float>& model, const ClassPromptSet& prompts, const Vocabulary& vocab);

// Cosine similarity between every row of `ecg` and every row of `text`.
Matrix<double> cosine_scores(const Matrix<double>& ecg, const Matrix<double>& text);

// score(i, c) = cos(x'_i, t'_c).
Matrix<double> zero_shot_scores(const Model<float>& model, const std::vector<Matrix<float>>& signals,
                                const ClassPromptSet& prompts, const Vocabulary& vocab);

// Mann-Whitney AUC: P(pos > neg) + 0.5 P(tie). Nullopt when a side is empty.
std::optional<double> auc(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

struct MacroAuc {
  double macro = 0.0;
  std::vector<std::optional<double>> per_class;  // nullopt = excluded
  std::vector<int> excluded;                     // classes lacking positives or negatives
};

// Unweighted mean over classes with both positives and negatives.
MacroAuc auc_macro(const Matrix<double>& scores, const LabelMatrix& labels);

struct ProbeConfig {
  int iterations = 500;
  double learning_rate = 0.1;
  double test_fraction = 0.2;  // split used by the single-dataset overload
};

struct ProbeResult {
  MacroAuc auc;
  int n_train = 0;
  int n_test = 0;
};

// Stratified subsample of `fraction` of the rows (at least one per class that
// has examples), grouped by each row's first positive label.
std::vector<int> stratified_subsample(const LabelMatrix& labels, double fraction, uint64_t seed);

// Logistic regression (one sigmoid per class) on z-scored features, full-batch
// gradient descent on binary cross-entropy; evaluated by macro AUC on the test set.
ProbeResult linear_probe(const Matrix<double>& train_x, const LabelMatrix& train_y, const Matrix<double>& test_x,
                         const LabelMatrix& test_y, double train_fraction, uint64_t seed,
                         const ProbeConfig& config = {});
// Splits (features, labels) into train/test (stratified, seeded) and probes.
ProbeResult linear_probe(const Matrix<double>& features, const LabelMatrix& labels, double train_fraction,
                         uint64_t seed, const ProbeConfig& config = {});

struct LabelMapping {
  std::vector<std::pair<std::string, std::optional<std::string>>> pairs;  // source -> target or NONE

  void validate() const;
};

// JSON list of {"source": ..., "target": ... | null}.
LabelMapping read_label_mapping(const std::filesystem::path& path);

// Renames columns to target classes: NONE columns are dropped, many-to-one
// merges OR the labels and take the max score. Target order follows first use.
ScoreMatrix map_labels(const LabelMapping& mapping, const ScoreMatrix& source);

// {task, auc_macro, per_class_auc, n_examples, config_hash}
std::string metrics_json(const std::string& task, const MacroAuc& result, const std::vector<std::string>& class_names,
                         size_t n_examples, const std::string& config_hash);

}  // namespace ecgtext
