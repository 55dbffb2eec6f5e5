#include "ecgtext/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"

namespace ecgtext {

namespace fs = std::filesystem;
using nlohmann::json;
using detail::decode_le_floats;
using detail::write_le_floats;

namespace {

constexpr std::string_view kPunctuation = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

const std::vector<std::string>& class_terms() {
  static const std::vector<std::string> terms = {
      "Sinus rhythm",        "Atrial fibrillation",      "Sinus tachycardia",     "Sinus bradycardia",
      "Left bundle branch block", "Right bundle branch block", "First degree AV block", "Left ventricular hypertrophy",
  };
  return terms;
}

// Second report part of phrase j; phrase 0 depends on whether the class is the normal one.
const std::vector<std::vector<std::string>>& phrase_modifiers() {
  static const std::vector<std::vector<std::string>> mods = {
      {"Abnormal ECG."},
      {"Borderline ECG."},
      {"With occasional PVCs."},
      {"Possible artifact.", "Abnormal ECG."},
      {"Nonspecific T-wave changes."},
      {"Low QRS voltages in limb leads."},
      {"Otherwise normal ECG."},
      {"Poor R-wave progression."},
  };
  return mods;
}

std::vector<std::string> phrase_parts(int cls, int phrase) {
  std::vector<std::string> parts{class_terms().at(static_cast<size_t>(cls)) + "."};
  if (phrase == 0 && cls == 0) {
    parts.emplace_back("Normal ECG.");
  } else {
    const auto& m = phrase_modifiers().at(static_cast<size_t>(phrase));
    parts.insert(parts.end(), m.begin(), m.end());
  }
  return parts;
}

}  // namespace

void EcgSignal::validate() const {
  if (samples.rows() <= 0 || samples.cols() <= 0) throw std::invalid_argument("ecg signal must be non-empty");
  if (!samples.allFinite()) throw std::invalid_argument("ecg signal contains non-finite samples");
  if (!(sample_rate_hz > 0)) throw std::invalid_argument("sample rate must be positive");
  if (static_cast<Index>(lead_names.size()) != samples.cols())
    throw std::invalid_argument("lead_names length must equal lead count");
  std::set<std::string> unique(lead_names.begin(), lead_names.end());
  if (unique.size() != lead_names.size()) throw std::invalid_argument("lead names must be unique");
}

bool operator==(const EcgSignal& a, const EcgSignal& b) {
  if (a.samples.rows() != b.samples.rows() || a.samples.cols() != b.samples.cols()) return false;
  return std::memcmp(a.samples.data(), b.samples.data(), sizeof(float) * static_cast<size_t>(a.samples.size())) == 0 &&
         a.sample_rate_hz == b.sample_rate_hz && a.lead_names == b.lead_names;
}

std::vector<std::string> default_lead_names(int n_leads) {
  static const std::vector<std::string> standard = {"I",  "II", "III", "aVR", "aVL", "aVF",
                                                    "V1", "V2", "V3",  "V4",  "V5",  "V6"};
  std::vector<std::string> names;
  for (int i = 0; i < n_leads; ++i)
    names.push_back(i < static_cast<int>(standard.size()) ? standard[static_cast<size_t>(i)]
                                                          : "L" + std::to_string(i + 1));
  return names;
}

std::string preprocess_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    const auto uc = static_cast<unsigned char>(ch);
    if (kPunctuation.find(ch) != std::string_view::npos) continue;
    if (std::isspace(uc)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(uc)));
  }
  return out;
}

std::string merge_reports(const std::vector<std::string>& parts) {
  if (parts.empty()) throw std::invalid_argument("no reports");
  std::string out = parts.front();
  for (size_t i = 1; i < parts.size(); ++i) {
    out.push_back(' ');
    out += parts[i];
  }
  return out;
}

TextReport TextReport::from_parts(std::vector<std::string> parts) {
  TextReport r;
  r.raw = merge_reports(parts);
  r.normalized = preprocess_text(r.raw);
  r.report_parts = std::move(parts);
  return r;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

int synth_class_capacity() { return static_cast<int>(class_terms().size()); }
int synth_phrase_capacity() { return static_cast<int>(phrase_modifiers().size()); }

std::string synth_class_name(int cls) {
  if (cls < 0 || cls >= synth_class_capacity()) throw std::out_of_range("synthetic class out of range");
  return preprocess_text(class_terms()[static_cast<size_t>(cls)]);
}

std::string synth_class_phrase(int cls, int phrase) {
  if (cls < 0 || cls >= synth_class_capacity()) throw std::out_of_range("synthetic class out of range");
  if (phrase < 0 || phrase >= synth_phrase_capacity()) throw std::out_of_range("synthetic phrase out of range");
  return preprocess_text(merge_reports(phrase_parts(cls, phrase)));
}

void SynthConfig::validate() const {
  if (n_examples < 1) throw std::invalid_argument("n_examples must be positive");
  if (n_classes < 2) throw std::invalid_argument("n_classes must be at least 2");
  if (n_classes > synth_class_capacity())
    throw std::invalid_argument("n_classes exceeds phrase pool capacity (" + std::to_string(synth_class_capacity()) +
                                ")");
  if (phrases_per_class < 1 || phrases_per_class > synth_phrase_capacity())
    throw std::invalid_argument("phrases_per_class exceeds phrase pool capacity (" +
                                std::to_string(synth_phrase_capacity()) + ")");
  if (!(duplicate_text_fraction >= 0.0 && duplicate_text_fraction <= 1.0))
    throw std::invalid_argument("duplicate_text_fraction must lie in [0, 1]");
  if (phrases_per_class < 2 && duplicate_text_fraction < 1.0)
    throw std::invalid_argument("non-duplicate examples need phrases_per_class >= 2");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std must be non-negative");
  if (length_l < 1 || n_leads < 1) throw std::invalid_argument("length_l and n_leads must be positive");
  if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("sample_rate_hz must be positive");
}

Matrix<float> synth_class_template(int cls, const SynthConfig& config) {
  // Class morphology is fixed per class index so that every seed shares the
  // same label semantics; only the noise depends on the corpus seed.
  std::mt19937_64 rng(0x9E3779B97F4A7C15ULL ^ static_cast<uint64_t>(cls + 1) * 1000003ULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double heart_rate = 55.0 + 17.0 * cls;
  const double period = 60.0 / heart_rate;
  const double axis = 2.0 * std::numbers::pi * u(rng);
  const double p_amp = cls == 1 ? 0.0 : 0.05 + 0.2 * u(rng);
  const double r_amp = 0.6 + 1.0 * u(rng);
  const double qrs_sigma = 0.008 + 0.012 * u(rng);
  const double t_amp = -0.3 + 0.7 * u(rng);
  const double t_axis = axis + std::numbers::pi * (u(rng) - 0.5);

  struct Bump {
    double offset, amp, sigma;
    bool repolarisation;
  };
  const std::vector<Bump> bumps = {
      {0.08, p_amp, 0.020, false},           {0.16, -0.15 * r_amp, qrs_sigma, false},
      {0.18, r_amp, qrs_sigma, false},       {0.20 + qrs_sigma, -0.25 * r_amp, qrs_sigma, false},
      {0.38, t_amp, 0.040, true},
  };

  const int L = config.length_l;
  const int C = config.n_leads;
  Matrix<float> out = Matrix<float>::Zero(L, C);
  for (int j = 0; j < C; ++j) {
    const double lead_angle = 2.0 * std::numbers::pi * j / C;
    const double gain = 0.3 + 0.7 * std::cos(lead_angle - axis);
    const double t_gain = 0.3 + 0.7 * std::cos(lead_angle - t_axis);
    for (int i = 0; i < L; ++i) {
      const double t = i / config.sample_rate_hz;
      double v = 0.0;
      // contributions from the current and neighbouring beats
      const double k0 = std::floor(t / period);
      for (double k = k0 - 1; k <= k0 + 1; k += 1.0) {
        const double start = k * period;
        for (const auto& b : bumps) {
          const double d = t - (start + b.offset);
          v += (b.repolarisation ? t_gain : gain) * b.amp * std::exp(-d * d / (2.0 * b.sigma * b.sigma));
        }
      }
      out(i, j) = static_cast<float>(v);
    }
  }
  return out;
}

std::vector<PairedExample> generate_synthetic_examples(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const int n = config.n_examples;

  std::vector<int> classes(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) classes[static_cast<size_t>(i)] = i % config.n_classes;
  std::shuffle(classes.begin(), classes.end(), rng);

  const auto n_dup = static_cast<int>(std::llround(config.duplicate_text_fraction * n));
  std::vector<uint8_t> duplicate(static_cast<size_t>(n), 0);
  std::fill(duplicate.begin(), duplicate.begin() + n_dup, 1);
  std::shuffle(duplicate.begin(), duplicate.end(), rng);

  std::vector<Matrix<float>> templates;
  for (int c = 0; c < config.n_classes; ++c) templates.push_back(synth_class_template(c, config));

  const auto names = default_lead_names(config.n_leads);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<PairedExample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int cls = classes[static_cast<size_t>(i)];
    int phrase = 0;
    if (!duplicate[static_cast<size_t>(i)]) {
      std::uniform_int_distribution<int> pick(1, config.phrases_per_class - 1);
      phrase = pick(rng);
    }
    PairedExample ex;
    char id[32];
    std::snprintf(id, sizeof(id), "ex%06d", i);
    ex.id = id;
    ex.ecg.samples = templates[static_cast<size_t>(cls)];
    if (config.noise_std > 0.0) {
      for (Index r = 0; r < ex.ecg.samples.rows(); ++r)
        for (Index c = 0; c < ex.ecg.samples.cols(); ++c)
          ex.ecg.samples(r, c) += static_cast<float>(config.noise_std * noise(rng));
    }
    ex.ecg.sample_rate_hz = config.sample_rate_hz;
    ex.ecg.lead_names = names;
    ex.report = TextReport::from_parts(phrase_parts(cls, phrase));
    ex.latent_class = cls;
    out.push_back(std::move(ex));
  }
  return out;
}

DatasetManifest generate_synthetic_corpus(const SynthConfig& config, const fs::path& root) {
  return save_dataset(generate_synthetic_examples(config), root);
}

// ---------------------------------------------------------------------------
// Signal and manifest files

void write_signal(const EcgSignal& signal, const fs::path& path) {
  signal.validate();
  json header = {{"L", signal.length()},
                 {"C", signal.leads()},
                 {"sample_rate_hz", signal.sample_rate_hz},
                 {"lead_names", signal.lead_names}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write signal file " + path.string());
  out << header.dump() << '\n';
  write_le_floats(out, signal.samples.data(), static_cast<size_t>(signal.samples.size()));
  if (!out) throw DatasetError("failed writing signal file " + path.string());
}

EcgSignal read_signal(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("missing ecg payload: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DatasetError("malformed header: " + path.string());
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception&) {
    throw DatasetError("malformed header: " + path.string());
  }
  EcgSignal s;
  Index L = 0, C = 0;
  try {
    L = header.at("L").get<Index>();
    C = header.at("C").get<Index>();
    s.sample_rate_hz = header.at("sample_rate_hz").get<double>();
    s.lead_names = header.contains("lead_names") ? header["lead_names"].get<std::vector<std::string>>()
                                                 : default_lead_names(static_cast<int>(C));
  } catch (const json::exception&) {
    throw DatasetError("malformed header: " + path.string());
  }
  if (L <= 0 || C <= 0) throw DatasetError("malformed header: " + path.string());
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto expected = static_cast<size_t>(L * C) * sizeof(float);
  if (payload.size() != expected)
    throw DatasetError("length mismatch: " + path.string() + " expected " + std::to_string(expected) +
                       " payload bytes, found " + std::to_string(payload.size()));
  s.samples.resize(L, C);
  decode_le_floats(payload.data(), s.samples.data(), static_cast<size_t>(L * C));
  return s;
}

DatasetManifest save_dataset(const std::vector<PairedExample>& examples, const fs::path& root,
                             const std::string& manifest_name, const std::string& config_hash) {
  fs::create_directories(root / "ecg");
  DatasetManifest manifest;
  manifest.root_path = root.string();
  manifest.manifest_path = (root / manifest_name).string();
  std::set<std::string> seen;
  std::ofstream out(root / manifest_name, std::ios::trunc);
  if (!out) throw DatasetError("cannot write manifest " + manifest.manifest_path);
  for (const auto& ex : examples) {
    if (!seen.insert(ex.id).second) throw DatasetError("duplicate example id " + ex.id);
    ManifestEntry e{ex.id, "ecg/" + ex.id + ".ecg", ex.report.raw, ex.latent_class, ex.report.report_parts};
    write_signal(ex.ecg, root / e.ecg_path);
    json line = {{"id", e.id}, {"ecg_path", e.ecg_path}, {"text", e.text}, {"report_parts", e.report_parts}};
    line["latent_class"] = e.latent_class ? json(*e.latent_class) : json(nullptr);
    if (!config_hash.empty()) line["config_hash"] = config_hash;
    out << line.dump() << '\n';
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

DatasetManifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DatasetError("missing manifest: " + manifest_path.string());
  DatasetManifest manifest;
  manifest.manifest_path = manifest_path.string();
  manifest.root_path = manifest_path.parent_path().string();
  std::set<std::string> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ManifestEntry e;
    try {
      const json j = json::parse(line);
      e.id = j.at("id").get<std::string>();
      e.ecg_path = j.at("ecg_path").get<std::string>();
      e.text = j.at("text").get<std::string>();
      if (j.contains("latent_class") && !j["latent_class"].is_null()) e.latent_class = j["latent_class"].get<int>();
      if (j.contains("report_parts")) e.report_parts = j["report_parts"].get<std::vector<std::string>>();
    } catch (const json::exception& err) {
      throw DatasetError("malformed manifest line " + std::to_string(line_no) + ": " + err.what());
    }
    if (!seen.insert(e.id).second) throw DatasetError("duplicate example id " + e.id);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::vector<PairedExample> load_dataset(const fs::path& manifest_path) {
  const DatasetManifest manifest = read_manifest(manifest_path);
  const fs::path root = manifest.root_path;
  std::vector<PairedExample> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    PairedExample ex;
    ex.id = e.id;
    ex.ecg = read_signal(root / e.ecg_path);
    if (!e.report_parts.empty() && merge_reports(e.report_parts) == e.text) {
      ex.report = TextReport::from_parts(e.report_parts);
    } else {
      ex.report = TextReport::from_parts({e.text});
    }
    ex.latent_class = e.latent_class;
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tokenizer

size_t TokenSequence::valid_count() const {
  return static_cast<size_t>(std::count(mask.begin(), mask.end(), uint8_t{1}));
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].empty()) throw std::invalid_argument("vocabulary words must be non-empty");
    if (!index_.emplace(words_[i], kFirstWord + static_cast<int>(i)).second)
      throw std::invalid_argument("duplicate vocabulary word: " + words_[i]);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  std::set<std::string> unique;
  for (const auto& t : texts) {
    std::istringstream ss(t);
    std::string w;
    while (ss >> w) unique.insert(w);
  }
  return Vocabulary(std::vector<std::string>(unique.begin(), unique.end()));
}

int Vocabulary::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < kFirstWord || id >= size()) throw std::out_of_range("token id has no vocabulary word");
  return words_[static_cast<size_t>(id - kFirstWord)];
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be positive");
  TokenSequence seq;
  seq.ids.assign(static_cast<size_t>(max_len), Vocabulary::kPad);
  seq.mask.assign(static_cast<size_t>(max_len), 0);
  std::istringstream ss{std::string(text)};
  std::string w;
  size_t pos = 0;
  while (pos < static_cast<size_t>(max_len) && ss >> w) {
    seq.ids[pos] = vocab.id(w);
    seq.mask[pos] = 1;
    ++pos;
  }
  return seq;
}

std::vector<std::string> detokenize(const TokenSequence& tokens, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (size_t i = 0; i < tokens.ids.size(); ++i) {
    if (!tokens.mask[i]) continue;
    const int id = tokens.ids[i];
    if (id == Vocabulary::kUnk) out.emplace_back("<unk>");
    else if (id == Vocabulary::kMask) out.emplace_back("<mask>");
    else out.push_back(vocab.word(id));
  }
  return out;
}

}  // namespace ecgtext
