#include "ecgtext/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ecgtext {

namespace {

std::vector<std::vector<int>> groups_by_first_label(const LabelMatrix& labels) {
  std::vector<std::vector<int>> groups(static_cast<size_t>(labels.cols()) + 1);
  for (Index r = 0; r < labels.rows(); ++r) {
    Index g = labels.cols();
    for (Index c = 0; c < labels.cols(); ++c) {
      if (labels(r, c)) {
        g = c;
        break;
      }
    }
    groups[static_cast<size_t>(g)].push_back(static_cast<int>(r));
  }
  return groups;
}

template <typename M>
M take_rows(const M& m, const std::vector<int>& rows) {
  M out(static_cast<Index>(rows.size()), m.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

void ClassPromptSet::validate() const {
  if (class_names.empty()) throw std::invalid_argument("empty prompt set");
  if (class_names.size() != descriptions.size())
    throw std::invalid_argument("prompt set needs one description per class");
  for (size_t i = 0; i < descriptions.size(); ++i)
    if (descriptions[i].empty()) throw std::invalid_argument("empty description for class " + class_names[i]);
}

ClassPromptSet read_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prompts file " + path.string());
  ClassPromptSet out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::invalid_argument("prompts line " + std::to_string(line_no) + " lacks a TAB separator");
    out.class_names.push_back(line.substr(0, tab));
    out.descriptions.push_back(line.substr(tab + 1));
  }
  out.validate();
  return out;
}

void write_prompts(const ClassPromptSet& prompts, const std::filesystem::path& path) {
  prompts.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write prompts file " + path.string());
  for (size_t i = 0; i < prompts.size(); ++i) out << prompts.class_names[i] << '\t' << prompts.descriptions[i] << '\n';
}

void ScoreMatrix::validate() const {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
    throw std::invalid_argument("scores and labels shapes differ");
  if (static_cast<Index>(class_names.size()) != scores.cols())
    throw std::invalid_argument("one class name per score column required");
  if (!scores.allFinite()) throw std::invalid_argument("scores must be finite");
}

LabelMatrix one_hot(const std::vector<int>& classes, int n_classes) {
  LabelMatrix out = LabelMatrix::Zero(static_cast<Index>(classes.size()), n_classes);
  for (size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= n_classes) throw std::out_of_range("class index out of range");
    out(static_cast<Index>(i), classes[i]) = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------

Matrix<double> extract_features(const Model<float>& model, const std::vector<Matrix<float>>& signals) {
  Matrix<double> out(static_cast<Index>(signals.size()), model.config().projection_dim);
  for (size_t i = 0; i < signals.size(); ++i) {
    Tape<float> tape;
    out.row(static_cast<Index>(i)) = model.ecg_embedding(tape, signals[i]).value().cast<double>();
  }
  return out;
}

Matrix<double> prompt_embeddings(const Model<float>& model, const ClassPromptSet& prompts, const Vocabulary& vocab) {
  prompts.validate();
  Matrix<double> out(static_cast<Index>(prompts.size()), model.config().projection_dim);
  for (size_t c = 0; c < prompts.size(); ++c) {
    const TokenSequence tokens =
        tokenize(preprocess_text(prompts.descriptions[c]), vocab, model.config().text.max_len);
    Tape<float> tape;
    out.row(static_cast<Index>(c)) = model.text_embedding(tape, tokens).value().cast<double>();
  }
  return out;
}

Matrix<double> cosine_scores(const Matrix<double>& ecg, const Matrix<double>& text) {
  if (ecg.cols() != text.cols()) throw std::invalid_argument("embedding widths differ");
  const auto unit = [](const Matrix<double>& m) {
    Matrix<double> u = m;
    for (Index r = 0; r < u.rows(); ++r) {
      const double n = u.row(r).norm();
      if (n > 0) u.row(r) /= n;
    }
    return u;
  };
  return unit(ecg) * unit(text).transpose();
}

Matrix<double> zero_shot_scores(const Model<float>& model, const std::vector<Matrix<float>>& signals,
                                const ClassPromptSet& prompts, const Vocabulary& vocab) {
  return cosine_scores(extract_features(model, signals), prompt_embeddings(model, prompts, vocab));
}

// ---------------------------------------------------------------------------

std::optional<double> auc(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  // twice the number of correctly ordered pairs, ties counting one
  uint64_t twice_correct = 0;
  uint64_t neg_below = 0, n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    uint64_t pos_here = 0, neg_here = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos_here : neg_here) += 1;
      ++j;
    }
    twice_correct += pos_here * (2 * neg_below + neg_here);
    neg_below += neg_here;
    n_pos += pos_here;
    n_neg += neg_here;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return static_cast<double>(twice_correct) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MacroAuc auc_macro(const Matrix<double>& scores, const LabelMatrix& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
    throw std::invalid_argument("auc_macro: scores and labels shapes differ");
  MacroAuc out;
  double sum = 0.0;
  int used = 0;
  for (Index c = 0; c < scores.cols(); ++c) {
    std::vector<double> s(static_cast<size_t>(scores.rows()));
    std::vector<uint8_t> y(s.size());
    for (Index r = 0; r < scores.rows(); ++r) {
      s[static_cast<size_t>(r)] = scores(r, c);
      y[static_cast<size_t>(r)] = labels(r, c) ? 1 : 0;
    }
    const auto a = auc(s, y);
    out.per_class.push_back(a);
    if (a) {
      sum += *a;
      ++used;
    } else {
      out.excluded.push_back(static_cast<int>(c));
    }
  }
  if (used == 0) throw std::invalid_argument("auc_macro: no class has both positives and negatives");
  out.macro = sum / used;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<int> stratified_subsample(const LabelMatrix& labels, double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("train fraction must lie in (0, 1]");
  std::mt19937_64 rng(seed);
  std::vector<int> out;
  for (auto& group : groups_by_first_label(labels)) {
    if (group.empty()) continue;
    std::shuffle(group.begin(), group.end(), rng);
    const auto take = std::max<size_t>(1, static_cast<size_t>(std::ceil(fraction * group.size() - 1e-9)));
    out.insert(out.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

ProbeResult linear_probe(const Matrix<double>& train_x, const LabelMatrix& train_y, const Matrix<double>& test_x,
                         const LabelMatrix& test_y, double train_fraction, uint64_t seed, const ProbeConfig& config) {
  if (train_x.rows() != train_y.rows() || test_x.rows() != test_y.rows() || train_x.cols() != test_x.cols() ||
      train_y.cols() != test_y.cols())
    throw std::invalid_argument("linear probe: inconsistent shapes");
  if (train_x.rows() == 0 || test_x.rows() == 0) throw std::invalid_argument("linear probe: empty split");

  const std::vector<int> rows = stratified_subsample(train_y, train_fraction, seed);
  const Matrix<double> x_raw = take_rows(train_x, rows);
  const Matrix<double> y = take_rows(train_y, rows).cast<double>();
  const Eigen::RowVectorXd mean = x_raw.colwise().mean();
  Eigen::RowVectorXd stdev = ((x_raw.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Index c = 0; c < stdev.size(); ++c)
    if (!(stdev(c) > 1e-12)) stdev(c) = 1.0;
  const auto standardize = [&](const Matrix<double>& m) -> Matrix<double> {
    return ((m.rowwise() - mean).array().rowwise() / stdev.array()).matrix();
  };
  const Matrix<double> x = standardize(x_raw);

  const Index n = x.rows();
  Matrix<double> w = Matrix<double>::Zero(x.cols(), y.cols());
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(y.cols());
  for (int it = 0; it < config.iterations; ++it) {
    Matrix<double> p = (x * w).rowwise() + b;
    p = p.unaryExpr([](double v) { return sigmoid(v); });
    const Matrix<double> err = (p - y) / static_cast<double>(n);
    w -= config.learning_rate * (x.transpose() * err);
    b -= config.learning_rate * err.colwise().sum();
  }

  ProbeResult out;
  const Matrix<double> test_scores = (standardize(test_x) * w).rowwise() + b;
  out.auc = auc_macro(test_scores, test_y);
  out.n_train = static_cast<int>(n);
  out.n_test = static_cast<int>(test_x.rows());
  return out;
}

ProbeResult linear_probe(const Matrix<double>& features, const LabelMatrix& labels, double train_fraction,
                         uint64_t seed, const ProbeConfig& config) {
  if (features.rows() != labels.rows()) throw std::invalid_argument("linear probe: inconsistent shapes");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<int> train, test;
  for (auto& group : groups_by_first_label(labels)) {
    std::shuffle(group.begin(), group.end(), rng);
    size_t n_test = static_cast<size_t>(std::llround(config.test_fraction * static_cast<double>(group.size())));
    if (group.size() >= 2) n_test = std::clamp<size_t>(n_test, 1, group.size() - 1);
    test.insert(test.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), group.begin() + static_cast<std::ptrdiff_t>(n_test), group.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return linear_probe(take_rows(features, train), take_rows(labels, train), take_rows(features, test),
                      take_rows(labels, test), train_fraction, seed, config);
}

// ---------------------------------------------------------------------------

void LabelMapping::validate() const {
  std::set<std::string> seen;
  for (const auto& [source, target] : pairs)
    if (!seen.insert(source).second) throw std::invalid_argument("duplicate source class in mapping: " + source);
}

LabelMapping read_label_mapping(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mapping file " + path.string());
  LabelMapping out;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& item : j) {
      const auto& t = item.at("target");
      out.pairs.emplace_back(item.at("source").get<std::string>(),
                             t.is_null() ? std::nullopt : std::optional<std::string>(t.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed mapping file: ") + e.what());
  }
  out.validate();
  return out;
}

ScoreMatrix map_labels(const LabelMapping& mapping, const ScoreMatrix& source) {
  mapping.validate();
  source.validate();
  std::map<std::string, std::optional<std::string>> lookup(mapping.pairs.begin(), mapping.pairs.end());
  std::vector<std::string> targets;
  std::vector<std::vector<Index>> members;
  for (Index c = 0; c < static_cast<Index>(source.class_names.size()); ++c) {
    const auto it = lookup.find(source.class_names[static_cast<size_t>(c)]);
    if (it == lookup.end()) throw std::invalid_argument("unknown source class " + source.class_names[c]);
    if (!it->second) continue;
    const auto pos = std::find(targets.begin(), targets.end(), *it->second);
    if (pos == targets.end()) {
      targets.push_back(*it->second);
      members.push_back({c});
    } else {
      members[static_cast<size_t>(pos - targets.begin())].push_back(c);
    }
  }
  ScoreMatrix out;
  out.class_names = targets;
  const Index n = source.scores.rows();
  out.scores.resize(n, static_cast<Index>(targets.size()));
  out.labels.resize(n, static_cast<Index>(targets.size()));
  for (size_t t = 0; t < targets.size(); ++t) {
    const auto col = static_cast<Index>(t);
    for (Index r = 0; r < n; ++r) {
      double best = -std::numeric_limits<double>::infinity();
      uint8_t any = 0;
      for (Index c : members[t]) {
        best = std::max(best, source.scores(r, c));
        any = static_cast<uint8_t>(any | (source.labels(r, c) ? 1 : 0));
      }
      out.scores(r, col) = best;
      out.labels(r, col) = any;
    }
  }
  return out;
}

std::string metrics_json(const std::string& task, const MacroAuc& result, const std::vector<std::string>& class_names,
                         size_t n_examples, const std::string& config_hash) {
  if (class_names.size() != result.per_class.size()) throw std::invalid_argument("one class name per AUC required");
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (size_t c = 0; c < class_names.size(); ++c)
    per_class[class_names[c]] = result.per_class[c] ? nlohmann::ordered_json(*result.per_class[c]) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json j;
  j["task"] = task;
  j["auc_macro"] = result.macro;
  j["per_class_auc"] = per_class;
  j["n_examples"] = n_examples;
  j["config_hash"] = config_hash;
  return j.dump();
}

}  // namespace ecgtext
