#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ecgtext/masking.hpp"
#include "ecgtext/objectives.hpp"

namespace ecgtext {

using TextEmbedder = std::function<std::vector<float>(std::string_view)>;

// Frozen bag-of-words embedder: each normalised word is hashed (FNV-1a) to a
// bucket; the count vector is L2-normalised. Word order is ignored. Counts are
// unsigned so colliding words cannot cancel to a zero vector.
class HashingEmbedder {
 public:
  explicit HashingEmbedder(int dim = 512) : dim_(dim) {}

  std::vector<float> operator()(std::string_view text) const;
  int dim() const { return dim_; }
  std::string id() const { return "hashing-bow-" + std::to_string(dim_); }

 private:
  int dim_;
};

class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  // Rows are stored as given; throws on duplicate ids, shape mismatch, or
  // non-finite / zero-norm rows.
  EmbeddingIndex(std::vector<std::string> ids, Matrix<float> vectors, std::string embedder_id);

  size_t size() const { return ids_.size(); }
  int dim() const { return static_cast<int>(vectors_.cols()); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Matrix<float>& vectors() const { return vectors_; }
  const std::vector<double>& norms() const { return norms_; }
  const std::string& embedder_id() const { return embedder_id_; }

  bool contains(const std::string& id) const { return row_.count(id) != 0; }
  int row(const std::string& id) const;  // throws on unknown id

  // Exact k farthest rows by cosine distance from `query_row`, excluding it.
  // Order: distance descending, ties by ascending id.
  std::vector<int> farthest_rows(int query_row, int k) const;

  friend bool operator==(const EmbeddingIndex& a, const EmbeddingIndex& b);

 private:
  std::vector<std::string> ids_;
  Matrix<float> vectors_;
  std::string embedder_id_;
  std::vector<double> norms_;
  Matrix<double> unit_;  // rows scaled to unit norm, double precision
  std::unordered_map<std::string, int> row_;
};

struct N3SConfig {
  int k = 64;
  double negative_fraction = 0.5;
  std::string embedder_id = "hashing-bow-512";
  uint64_t seed = 0;

  void validate() const;
};

EmbeddingIndex build_index(const std::vector<std::pair<std::string, std::string>>& reports,
                           const TextEmbedder& embedder, const std::string& embedder_id);
EmbeddingIndex build_index(const std::vector<std::pair<std::string, std::string>>& reports,
                           const HashingEmbedder& embedder);

// A non-empty `config_hash` is recorded in the header.
void save_index(const EmbeddingIndex& index, const std::filesystem::path& path, const std::string& config_hash = "");
EmbeddingIndex load_index(const std::filesystem::path& path);

std::vector<std::string> top_k_farthest(const EmbeddingIndex& index, const std::string& query_id, int k);

// Plain scan over raw vectors with per-pair cosine; shares only the tie rule.
std::vector<std::string> brute_force_farthest(const std::vector<std::string>& ids, const Matrix<float>& vectors,
                                              const std::string& query_id, int k);

enum class NegativeStrategy { kFarthest, kRandom };

// Which batch rows received a replacement report, and from which corpus id.
struct Substitution {
  std::vector<int> positions;  // ascending
  std::vector<std::string> replacement_ids;
  PairLabels labels;
};

// Picks floor(fraction * B) rows uniformly; each gets a report drawn uniformly
// from its top-k farthest set (kFarthest) or from all other reports (kRandom).
Substitution sample_negatives(const EmbeddingIndex& index, const std::vector<std::string>& batch_ids,
                              const N3SConfig& config, Rng& rng,
                              NegativeStrategy strategy = NegativeStrategy::kFarthest);

// Applies sample_negatives to whole examples; `corpus` supplies replacement reports.
std::pair<std::vector<PairedExample>, Substitution> sample_negatives(
    const EmbeddingIndex& index, const std::vector<PairedExample>& batch,
    const std::unordered_map<std::string, const PairedExample*>& corpus, const N3SConfig& config, Rng& rng,
    NegativeStrategy strategy = NegativeStrategy::kFarthest);

}  // namespace ecgtext
