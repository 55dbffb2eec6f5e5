#include "ecgtext/n3s.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"

namespace ecgtext {

using nlohmann::json;

namespace {

constexpr int kIndexVersion = 1;

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Sort key for "farthest first, then ascending id".
struct FarthestFirst {
  const std::vector<double>* dist;
  const std::vector<std::string>* ids;
  bool operator()(int a, int b) const {
    const double da = (*dist)[static_cast<size_t>(a)];
    const double db = (*dist)[static_cast<size_t>(b)];
    if (da != db) return da > db;
    return (*ids)[static_cast<size_t>(a)] < (*ids)[static_cast<size_t>(b)];
  }
};

void check_k(int k, size_t n) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (static_cast<size_t>(k) >= n)
    throw std::invalid_argument("k=" + std::to_string(k) + " must be smaller than the index size " + std::to_string(n));
}

}  // namespace

std::vector<float> HashingEmbedder::operator()(std::string_view text) const {
  if (dim_ < 1) throw std::invalid_argument("embedder dim must be positive");
  std::vector<double> acc(static_cast<size_t>(dim_), 0.0);
  std::istringstream words(preprocess_text(text));
  std::string w;
  while (words >> w) {
    const uint64_t h = fnv1a(w);
    acc[static_cast<size_t>(h % static_cast<uint64_t>(dim_))] += 1.0;
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<float> out(acc.size(), 0.0f);
  if (norm == 0.0) return out;
  for (size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

// ---------------------------------------------------------------------------

EmbeddingIndex::EmbeddingIndex(std::vector<std::string> ids, Matrix<float> vectors, std::string embedder_id)
    : ids_(std::move(ids)), vectors_(std::move(vectors)), embedder_id_(std::move(embedder_id)) {
  if (static_cast<Index>(ids_.size()) != vectors_.rows())
    throw std::invalid_argument("index ids and vectors disagree on N");
  if (ids_.empty() || vectors_.cols() < 1) throw std::invalid_argument("index must be non-empty");
  unit_.resize(vectors_.rows(), vectors_.cols());
  norms_.resize(ids_.size());
  for (size_t i = 0; i < ids_.size(); ++i) {
    if (!row_.emplace(ids_[i], static_cast<int>(i)).second) throw std::invalid_argument("duplicate index id " + ids_[i]);
    const auto r = static_cast<Index>(i);
    const Eigen::RowVectorXd v = vectors_.row(r).cast<double>();
    if (!v.allFinite()) throw std::invalid_argument("non-finite embedding for id " + ids_[i]);
    const double n = v.norm();
    if (n == 0.0) throw std::invalid_argument("zero embedding for id " + ids_[i]);
    norms_[i] = n;
    unit_.row(r) = v / n;
  }
}

int EmbeddingIndex::row(const std::string& id) const {
  const auto it = row_.find(id);
  if (it == row_.end()) throw std::out_of_range("unknown index id " + id);
  return it->second;
}

std::vector<int> EmbeddingIndex::farthest_rows(int query_row, int k) const {
  check_k(k, ids_.size());
  if (query_row < 0 || static_cast<size_t>(query_row) >= ids_.size()) throw std::out_of_range("query row out of range");
  const Eigen::VectorXd sims = unit_ * unit_.row(query_row).transpose();
  std::vector<double> dist(ids_.size());
  for (size_t i = 0; i < dist.size(); ++i) dist[i] = 1.0 - sims(static_cast<Index>(i));
  std::vector<int> order;
  order.reserve(ids_.size() - 1);
  for (int i = 0; i < static_cast<int>(ids_.size()); ++i)
    if (i != query_row) order.push_back(i);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), FarthestFirst{&dist, &ids_});
  order.resize(static_cast<size_t>(k));
  return order;
}

bool operator==(const EmbeddingIndex& a, const EmbeddingIndex& b) {
  return a.ids_ == b.ids_ && a.embedder_id_ == b.embedder_id_ && a.vectors_.rows() == b.vectors_.rows() &&
         a.vectors_.cols() == b.vectors_.cols() &&
         std::memcmp(a.vectors_.data(), b.vectors_.data(), sizeof(float) * static_cast<size_t>(a.vectors_.size())) == 0;
}

void N3SConfig::validate() const {
  if (k < 1) throw std::invalid_argument("n3s k must be at least 1");
  if (!(negative_fraction >= 0.0 && negative_fraction <= 1.0))
    throw std::invalid_argument("negative_fraction must lie in [0, 1]");
}

// ---------------------------------------------------------------------------

EmbeddingIndex build_index(const std::vector<std::pair<std::string, std::string>>& reports,
                           const TextEmbedder& embedder, const std::string& embedder_id) {
  if (reports.empty()) throw std::invalid_argument("cannot build an index over zero reports");
  std::vector<std::string> ids;
  ids.reserve(reports.size());
  Matrix<float> vectors;
  for (size_t i = 0; i < reports.size(); ++i) {
    const auto& [id, text] = reports[i];
    const std::vector<float> v = embedder(text);
    if (i == 0) vectors.resize(static_cast<Index>(reports.size()), static_cast<Index>(v.size()));
    if (static_cast<Index>(v.size()) != vectors.cols() || v.empty())
      throw std::invalid_argument("embedder returned a vector of unexpected size for id " + id);
    bool nonzero = false;
    for (float x : v) {
      if (!std::isfinite(x)) throw std::invalid_argument("embedder returned a non-finite vector for id " + id);
      nonzero = nonzero || x != 0.0f;
    }
    if (!nonzero) throw std::invalid_argument("embedder returned a zero vector for id " + id);
    for (size_t c = 0; c < v.size(); ++c) vectors(static_cast<Index>(i), static_cast<Index>(c)) = v[c];
    ids.push_back(id);
  }
  return EmbeddingIndex(std::move(ids), std::move(vectors), embedder_id);
}

EmbeddingIndex build_index(const std::vector<std::pair<std::string, std::string>>& reports,
                           const HashingEmbedder& embedder) {
  return build_index(reports, TextEmbedder(embedder), embedder.id());
}

void save_index(const EmbeddingIndex& index, const std::filesystem::path& path, const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write index file " + path.string());
  json header = {{"format", "ecgtext-index"},
                 {"version", kIndexVersion},
                 {"N", index.size()},
                 {"D", index.dim()},
                 {"embedder_id", index.embedder_id()}};
  if (!config_hash.empty()) header["config_hash"] = config_hash;
  out << header.dump() << '\n';
  detail::write_le_floats(out, index.vectors().data(), static_cast<size_t>(index.vectors().size()));
  for (const auto& id : index.ids()) out << id << '\n';
  if (!out) throw std::runtime_error("failed writing index file " + path.string());
}

EmbeddingIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open index file " + path.string());
  std::string line;
  std::getline(in, line);
  json header;
  size_t n = 0, d = 0;
  std::string embedder_id;
  try {
    header = json::parse(line);
    if (header.at("format").get<std::string>() != "ecgtext-index") throw std::runtime_error("not an index file");
    if (header.at("version").get<int>() != kIndexVersion) throw std::runtime_error("unsupported index version");
    n = header.at("N").get<size_t>();
    d = header.at("D").get<size_t>();
    embedder_id = header.at("embedder_id").get<std::string>();
  } catch (const json::exception&) {
    throw std::runtime_error("malformed index header in " + path.string());
  }
  std::string payload(n * d * sizeof(float), '\0');
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (static_cast<size_t>(in.gcount()) != payload.size()) throw std::runtime_error("truncated index payload");
  Matrix<float> vectors(static_cast<Index>(n), static_cast<Index>(d));
  detail::decode_le_floats(payload.data(), vectors.data(), n * d);
  std::vector<std::string> ids;
  while (ids.size() < n && std::getline(in, line)) ids.push_back(line);
  if (ids.size() != n) throw std::runtime_error("truncated index id table");
  return EmbeddingIndex(std::move(ids), std::move(vectors), embedder_id);
}

std::vector<std::string> top_k_farthest(const EmbeddingIndex& index, const std::string& query_id, int k) {
  const auto rows = index.farthest_rows(index.row(query_id), k);
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(index.ids()[static_cast<size_t>(r)]);
  return out;
}

std::vector<std::string> brute_force_farthest(const std::vector<std::string>& ids, const Matrix<float>& vectors,
                                              const std::string& query_id, int k) {
  check_k(k, ids.size());
  const auto q_it = std::find(ids.begin(), ids.end(), query_id);
  if (q_it == ids.end()) throw std::out_of_range("unknown index id " + query_id);
  const auto q = static_cast<Index>(q_it - ids.begin());
  std::vector<double> dist(ids.size(), 0.0);
  double qq = 0.0;
  for (Index c = 0; c < vectors.cols(); ++c) qq += double(vectors(q, c)) * double(vectors(q, c));
  for (Index r = 0; r < vectors.rows(); ++r) {
    double dot = 0.0, vv = 0.0;
    for (Index c = 0; c < vectors.cols(); ++c) {
      dot += double(vectors(q, c)) * double(vectors(r, c));
      vv += double(vectors(r, c)) * double(vectors(r, c));
    }
    dist[static_cast<size_t>(r)] = 1.0 - dot / (std::sqrt(qq) * std::sqrt(vv));
  }
  std::vector<int> order;
  for (int r = 0; r < static_cast<int>(ids.size()); ++r)
    if (r != q) order.push_back(r);
  std::sort(order.begin(), order.end(), FarthestFirst{&dist, &ids});
  std::vector<std::string> out;
  for (int i = 0; i < k; ++i) out.push_back(ids[static_cast<size_t>(order[static_cast<size_t>(i)])]);
  return out;
}

// ---------------------------------------------------------------------------

Substitution sample_negatives(const EmbeddingIndex& index, const std::vector<std::string>& batch_ids,
                              const N3SConfig& config, Rng& rng, NegativeStrategy strategy) {
  config.validate();
  if (batch_ids.empty()) throw std::invalid_argument("cannot sample negatives for an empty batch");
  check_k(config.k, index.size());
  const int b = static_cast<int>(batch_ids.size());
  const int n_neg = static_cast<int>(std::floor(config.negative_fraction * b + 1e-9));

  std::vector<int> slots(static_cast<size_t>(b));
  std::iota(slots.begin(), slots.end(), 0);
  for (int i = 0; i < n_neg; ++i) {
    std::uniform_int_distribution<int> pick(i, b - 1);
    std::swap(slots[static_cast<size_t>(i)], slots[static_cast<size_t>(pick(rng))]);
  }
  Substitution sub;
  sub.positions.assign(slots.begin(), slots.begin() + n_neg);
  std::sort(sub.positions.begin(), sub.positions.end());
  sub.labels = PairLabels::identity(b);

  for (int pos : sub.positions) {
    const int q = index.row(batch_ids[static_cast<size_t>(pos)]);
    int chosen = 0;
    if (strategy == NegativeStrategy::kFarthest) {
      const auto far = index.farthest_rows(q, config.k);
      std::uniform_int_distribution<size_t> pick(0, far.size() - 1);
      chosen = far[pick(rng)];
    } else {
      std::uniform_int_distribution<int> pick(0, static_cast<int>(index.size()) - 2);
      chosen = pick(rng);
      if (chosen >= q) ++chosen;
    }
    sub.replacement_ids.push_back(index.ids()[static_cast<size_t>(chosen)]);
    sub.labels.match[static_cast<size_t>(pos)] = 0;
    sub.labels.pairwise(pos, pos) = -1.0f;
  }
  return sub;
}

std::pair<std::vector<PairedExample>, Substitution> sample_negatives(
    const EmbeddingIndex& index, const std::vector<PairedExample>& batch,
    const std::unordered_map<std::string, const PairedExample*>& corpus, const N3SConfig& config, Rng& rng,
    NegativeStrategy strategy) {
  std::vector<std::string> ids;
  ids.reserve(batch.size());
  for (const auto& ex : batch) ids.push_back(ex.id);
  Substitution sub = sample_negatives(index, ids, config, rng, strategy);
  std::vector<PairedExample> out = batch;
  for (size_t i = 0; i < sub.positions.size(); ++i) {
    const auto it = corpus.find(sub.replacement_ids[i]);
    if (it == corpus.end()) throw std::out_of_range("replacement id missing from corpus: " + sub.replacement_ids[i]);
    out[static_cast<size_t>(sub.positions[i])].report = it->second->report;
  }
  return {std::move(out), std::move(sub)};
}

}  // namespace ecgtext
