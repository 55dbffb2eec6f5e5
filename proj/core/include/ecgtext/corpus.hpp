#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ecgtext/autograd.hpp"

namespace ecgtext {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// L x C recording in millivolts; rows are time, columns are leads.
struct EcgSignal {
  Matrix<float> samples;
  double sample_rate_hz = 500.0;
  std::vector<std::string> lead_names;

  Index length() const { return samples.rows(); }
  Index leads() const { return samples.cols(); }

  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;

  friend bool operator==(const EcgSignal&, const EcgSignal&);
};

std::vector<std::string> default_lead_names(int n_leads);

struct TextReport {
  std::string raw;
  std::string normalized;
  std::vector<std::string> report_parts;

  static TextReport from_parts(std::vector<std::string> parts);
  friend bool operator==(const TextReport&, const TextReport&) = default;
};

struct PairedExample {
  std::string id;
  EcgSignal ecg;
  TextReport report;
  std::optional<int> latent_class;

  friend bool operator==(const PairedExample&, const PairedExample&) = default;
};

struct ManifestEntry {
  std::string id;
  std::string ecg_path;  // relative to the manifest directory
  std::string text;
  std::optional<int> latent_class;
  std::vector<std::string> report_parts;
};

struct DatasetManifest {
  std::string root_path;
  std::string manifest_path;
  std::vector<ManifestEntry> entries;
};

/// Lowercases, drops ASCII punctuation, collapses whitespace runs and trims.
std::string preprocess_text(std::string_view raw);

/// Joins report parts in order with a single space. Throws on an empty list.
std::string merge_reports(const std::vector<std::string>& parts);

struct SynthConfig {
  int n_examples = 2000;
  int n_classes = 4;
  int length_l = 300;
  int n_leads = 12;
  double sample_rate_hz = 100.0;
  double noise_std = 0.05;
  double duplicate_text_fraction = 0.5;
  int phrases_per_class = 4;
  uint64_t seed = 7;

  void validate() const;
};

int synth_class_capacity();
int synth_phrase_capacity();

// Canonical report (first phrase) of a synthetic class, already normalised.
std::string synth_class_name(int cls);
std::string synth_class_phrase(int cls, int phrase);

// Noise-free waveform shared by every example of a class.
Matrix<float> synth_class_template(int cls, const SynthConfig& config);

std::vector<PairedExample> generate_synthetic_examples(const SynthConfig& config);

/// Generates the corpus and writes it under `root` (manifest.jsonl + ecg/*.ecg).
DatasetManifest generate_synthetic_corpus(const SynthConfig& config, const std::filesystem::path& root);

// Signal file: one-line JSON header, then little-endian float32 row-major payload.
void write_signal(const EcgSignal& signal, const std::filesystem::path& path);
EcgSignal read_signal(const std::filesystem::path& path);

// A non-empty `config_hash` is written into every manifest line.
DatasetManifest save_dataset(const std::vector<PairedExample>& examples, const std::filesystem::path& root,
                             const std::string& manifest_name = "manifest.jsonl", const std::string& config_hash = "");
DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
std::vector<PairedExample> load_dataset(const std::filesystem::path& manifest_path);

struct TokenSequence {
  std::vector<int> ids;
  std::vector<uint8_t> mask;

  size_t valid_count() const;
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kFirstWord = 3;

  Vocabulary() = default;
  // Words receive ids kFirstWord, kFirstWord + 1, ... in the given order.
  explicit Vocabulary(std::vector<std::string> words);

  // Sorted unique whitespace-separated words of `texts`.
  static Vocabulary build(const std::vector<std::string>& texts);

  int id(std::string_view word) const;
  const std::string& word(int id) const;
  int size() const { return kFirstWord + static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_len);
std::vector<std::string> detokenize(const TokenSequence& tokens, const Vocabulary& vocab);

}  // namespace ecgtext
