#include "ecgtext/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "binary_io.hpp"

namespace ecgtext {

using nlohmann::json;

NLOHMANN_JSON_SERIALIZE_ENUM(MlmReduction, {{MlmReduction::kSumPerSequence, "sum_per_sequence"},
                                            {MlmReduction::kTokenMean, "token_mean"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EcgEncoderConfig, n_leads, conv_channels, conv_kernels, conv_strides, norm_groups,
                                   embed_dim, n_layers, n_heads, ffn_dim, pos_conv_kernel, pos_conv_groups)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TextEncoderConfig, vocab_size, embed_dim, n_layers, n_heads, ffn_dim, max_len)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FusionConfig, embed_dim, n_heads, n_blocks, ffn_dim)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MemDecoderConfig, decoder_dim, n_layers, n_heads, ffn_dim, upsample)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MemLossOptions, masked_only, element_mean)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EtsOptions, normalize)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ObjectiveConfig, mlm_reduction, mem, ets)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelConfig, ecg, text, fusion, mem, objective, projection_dim, init_seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(OptimizerConfig, peak_lr, beta1, beta2, eps, weight_decay)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ScheduleConfig, total_steps, warmup_ratio, hold_ratio, decay_ratio, init_lr_scale,
                                   final_lr_scale)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MaskConfig, lead_mask_prob, input_dropout_prob, mlm_mask_ratio, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(N3SConfig, k, negative_fraction, embedder_id, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossWeights, mlm, mem, etm, ets)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PretrainConfig, model, optimizer, schedule, mask, n3s, weights, batch_size, seed,
                                   use_n3s)

namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "ecgtext-checkpoint";

void reject_unknown_keys(const json& patch, const json& base, const std::string& path) {
  if (!patch.is_object()) return;
  for (const auto& [key, value] : patch.items()) {
    if (!base.contains(key)) throw std::invalid_argument("unknown config key " + path + key);
    if (value.is_object() && base[key].is_object()) reject_unknown_keys(value, base[key], path + key + ".");
  }
}

json record_to_json(const StepRecord& r) {
  return json{{"step", r.step},         {"lr", r.lr},          {"mlm", r.loss.mlm},
              {"mem", r.loss.mem},      {"etm", r.loss.etm},   {"ets", r.loss.ets},
              {"total", r.loss.total},  {"etm_acc", r.etm_accuracy}};
}

StepRecord record_from_json(const json& j, const LossWeights& weights) {
  StepRecord r;
  r.step = j.at("step").get<int64_t>();
  r.lr = j.at("lr").get<double>();
  r.loss.mlm = j.at("mlm").get<double>();
  r.loss.mem = j.at("mem").get<double>();
  r.loss.etm = j.at("etm").get<double>();
  r.loss.ets = j.at("ets").get<double>();
  r.loss.total = j.at("total").get<double>();
  r.loss.weights = weights;
  r.etm_accuracy = j.at("etm_acc").get<double>();
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Optimiser and schedule

void OptimizerConfig::validate() const {
  if (!(peak_lr >= 0.0)) throw std::invalid_argument("peak_lr must be non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
    throw std::invalid_argument("beta1 and beta2 must lie in (0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
}

void ScheduleConfig::validate() const {
  if (total_steps < 1) throw std::invalid_argument("total_steps must be positive");
  if (!(warmup_ratio > 0 && hold_ratio > 0 && decay_ratio > 0))
    throw std::invalid_argument("schedule ratios must be positive");
  if (std::abs(warmup_ratio + hold_ratio + decay_ratio - 1.0) > 1e-9)
    throw std::invalid_argument("schedule ratios must sum to 1");
  if (!(init_lr_scale > 0 && final_lr_scale > 0)) throw std::invalid_argument("lr scales must be positive");
}

int64_t ScheduleConfig::warmup_steps() const {
  return static_cast<int64_t>(std::llround(warmup_ratio * static_cast<double>(total_steps)));
}

int64_t ScheduleConfig::hold_steps() const {
  return static_cast<int64_t>(std::llround(hold_ratio * static_cast<double>(total_steps)));
}

double tri_stage_lr(int64_t step, const ScheduleConfig& schedule, double peak_lr) {
  schedule.validate();
  if (step < 0 || step > schedule.total_steps)
    throw std::out_of_range("step " + std::to_string(step) + " outside [0, " + std::to_string(schedule.total_steps) +
                            "]");
  const int64_t warm = schedule.warmup_steps();
  const int64_t hold_end = std::min(warm + schedule.hold_steps(), schedule.total_steps);
  if (step < warm) {
    const double start = schedule.init_lr_scale * peak_lr;
    return start + (peak_lr - start) * static_cast<double>(step) / static_cast<double>(warm);
  }
  if (step <= hold_end) return peak_lr;
  const double decay_len = static_cast<double>(schedule.total_steps - hold_end);
  const double progress = static_cast<double>(step - hold_end) / decay_len;
  return peak_lr * std::exp(progress * std::log(schedule.final_lr_scale));
}

AdamW::AdamW(const OptimizerConfig& config, const ParameterSet<float>& params) : config_(config) {
  config_.validate();
  for (const Parameter<float>* p : params.list()) {
    m_.push_back(Matrix<float>::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix<float>::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::step(ParameterSet<float>& params, double lr) {
  auto list = params.list();
  if (list.size() != m_.size()) throw std::invalid_argument("optimizer state does not match the parameter set");
  ++t_;
  const auto b1 = static_cast<float>(config_.beta1);
  const auto b2 = static_cast<float>(config_.beta2);
  const auto bc1 = static_cast<float>(1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
  const auto bc2 = static_cast<float>(1.0 - std::pow(config_.beta2, static_cast<double>(t_)));
  const auto eps = static_cast<float>(config_.eps);
  const auto step_lr = static_cast<float>(lr);
  const auto shrink = static_cast<float>(1.0 - lr * config_.weight_decay);
  for (size_t i = 0; i < list.size(); ++i) {
    Parameter<float>& p = *list[i];
    if (p.grad.size() != p.value.size()) p.zero_grad();
    if (p.decay) p.value *= shrink;
    m_[i] = b1 * m_[i] + (1.0f - b1) * p.grad;
    v_[i] = b2 * v_[i] + (1.0f - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= step_lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps);
  }
}

void AdamW::restore(int64_t t, std::vector<Matrix<float>> m, std::vector<Matrix<float>> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw std::invalid_argument("optimizer state size mismatch");
  for (size_t i = 0; i < m.size(); ++i)
    if (m[i].rows() != m_[i].rows() || m[i].cols() != m_[i].cols() || v[i].rows() != v_[i].rows() ||
        v[i].cols() != v_[i].cols())
      throw std::invalid_argument("optimizer moment shape mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

std::vector<std::string> decay_excluded(const ParameterSet<float>& params) {
  std::vector<std::string> out;
  for (const auto* p : params.list())
    if (!p->decay) out.push_back(p->name);
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

void PretrainConfig::validate() const {
  model.validate();
  optimizer.validate();
  schedule.validate();
  mask.validate();
  n3s.validate();
  weights.validate();
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
}

std::string config_to_json(const PretrainConfig& config) { return json(config).dump(); }

PretrainConfig config_from_json(std::string_view text, const PretrainConfig& base) {
  try {
    json merged = base;
    const json patch = json::parse(text);
    if (!patch.is_object()) throw std::invalid_argument("config must be a JSON object");
    reject_unknown_keys(patch, merged, "");
    merged.merge_patch(patch);
    return merged.get<PretrainConfig>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("invalid config: ") + e.what());
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string config_hash(const PretrainConfig& config) { return sha256_hex(config_to_json(config)).substr(0, 16); }

// ---------------------------------------------------------------------------
// Batches

TrainingData::TrainingData(std::vector<PairedExample> ex, Vocabulary v, EmbeddingIndex idx)
    : examples(std::move(ex)), vocab(std::move(v)), index(std::move(idx)) {
  if (examples.empty()) throw std::invalid_argument("training data is empty");
  for (size_t i = 0; i < examples.size(); ++i) {
    if (!by_id_.emplace(examples[i].id, i).second) throw std::invalid_argument("duplicate example id " + examples[i].id);
    if (!index.contains(examples[i].id)) throw std::invalid_argument("example missing from index: " + examples[i].id);
  }
}

const PairedExample& TrainingData::by_id(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) throw std::out_of_range("unknown example id " + id);
  return examples[it->second];
}

Rng batch_rng(uint64_t seed, int64_t step) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(step),
                    static_cast<uint32_t>(static_cast<uint64_t>(step) >> 32)};
  return Rng(seq);
}

TrainingBatch build_batch(const TrainingData& data, const PretrainConfig& config, int64_t step,
                          Substitution* substitution) {
  const size_t n = data.examples.size();
  const auto b = static_cast<size_t>(config.batch_size);
  if (b > n) throw std::invalid_argument("batch_size exceeds the number of examples");
  Rng rng = batch_rng(config.seed, step);

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t i = 0; i < b; ++i) {
    std::uniform_int_distribution<size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<std::string> ids;
  for (size_t i = 0; i < b; ++i) ids.push_back(data.examples[order[i]].id);

  const NegativeStrategy strategy = config.use_n3s ? NegativeStrategy::kFarthest : NegativeStrategy::kRandom;
  Substitution sub = sample_negatives(data.index, ids, config.n3s, rng, strategy);

  std::vector<const TextReport*> texts;
  for (const auto& id : ids) texts.push_back(&data.by_id(id).report);
  for (size_t k = 0; k < sub.positions.size(); ++k)
    texts[static_cast<size_t>(sub.positions[k])] = &data.by_id(sub.replacement_ids[k]).report;

  TrainingBatch batch;
  batch.labels = sub.labels;
  batch.substituted = sub.positions;
  const int max_len = config.model.text.max_len;
  for (size_t i = 0; i < b; ++i) {
    const EcgSignal& signal = data.by_id(ids[i]).ecg;
    LeadMaskResult leads = random_lead_mask(signal, config.mask.lead_mask_prob, rng);
    DropoutResult dropped = input_dropout_mask(leads.signal, config.mask.input_dropout_prob, rng);
    Matrix<float> corruption = dropped.element_mask;
    for (size_t c = 0; c < leads.lead_mask.size(); ++c)
      if (leads.lead_mask[c]) corruption.col(static_cast<Index>(c)).setOnes();
    batch.ecg.push_back(std::move(dropped.signal.samples));
    batch.ecg_target.push_back(signal.samples);
    batch.corruption.push_back(std::move(corruption));

    TokenSequence clean = tokenize(texts[i]->normalized, data.vocab, max_len);
    MlmMaskResult masked = mlm_mask(clean, config.mask.mlm_mask_ratio, rng);
    batch.text_clean.push_back(std::move(clean));
    batch.text_masked.push_back(std::move(masked.tokens));
    batch.mlm.push_back(MlmTargets{std::move(masked.positions), std::move(masked.targets)});
  }
  if (substitution != nullptr) *substitution = std::move(sub);
  return batch;
}

std::string step_record_json(const StepRecord& r, const std::string& hash) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["mlm"] = r.loss.mlm;
  j["mem"] = r.loss.mem;
  j["etm"] = r.loss.etm;
  j["ets"] = r.loss.ets;
  j["total"] = r.loss.total;
  j["etm_acc"] = r.etm_accuracy;
  j["config_hash"] = hash;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const PretrainConfig& config, const TrainingData& data) : config_(config), data_(data) {
  config_.validate();
  if (config_.model.text.vocab_size != data_.vocab.size())
    throw std::invalid_argument("model vocab_size " + std::to_string(config_.model.text.vocab_size) +
                                " does not match the vocabulary size " + std::to_string(data_.vocab.size()));
  hash_ = config_hash(config_);
  model_ = std::make_unique<Model<float>>(config_.model);
  optimizer_ = AdamW(config_.optimizer, model_->params());
}

StepRecord Trainer::train_step(const StepHooks& hooks) {
  if (step_ >= config_.schedule.total_steps) throw TrainingError("training already reached total_steps");
  const TrainingBatch batch = build_batch(data_, config_, step_);
  ParameterSet<float>& params = model_->params();
  params.zero_grad();
  Tape<float> tape;
  const ForwardResult<float> fwd = model_->forward(tape, batch, config_.weights);
  const LossBreakdown& br = fwd.breakdown;
  const std::pair<const char*, double> parts[] = {
      {"mlm", br.mlm}, {"mem", br.mem}, {"etm", br.etm}, {"ets", br.ets}, {"total", br.total}};
  for (const auto& [name, value] : parts)
    if (!std::isfinite(value))
      throw TrainingError("non-finite " + std::string(name) + " loss at step " + std::to_string(step_));

  tape.backward(fwd.total);
  if (hooks.after_backward) hooks.after_backward(params);
  for (const Parameter<float>* p : params.list())
    if (!p->grad.allFinite())
      throw TrainingError("non-finite gradient in parameter " + p->name + " at step " + std::to_string(step_));

  const double lr = tri_stage_lr(step_, config_.schedule, config_.optimizer.peak_lr);
  optimizer_.step(params, lr);
  for (const Parameter<float>* p : params.list())
    if (!p->value.allFinite())
      throw TrainingError("non-finite value in parameter " + p->name + " after step " + std::to_string(step_));

  StepRecord record{step_, lr, br, fwd.etm_accuracy};
  history_.push_back(record);
  ++step_;
  return record;
}

void Trainer::run(int64_t until, const std::function<void(const StepRecord&)>& on_step) {
  const int64_t end = std::min(until, config_.schedule.total_steps);
  while (step_ < end) {
    const StepRecord r = train_step();
    if (on_step) on_step(r);
  }
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  Checkpoint ck;
  ck.config = config_;
  ck.config_hash = hash_;
  ck.step = step_;
  ck.vocab_words = data_.vocab.words();
  for (const Parameter<float>* p : model_->params().list()) {
    ck.names.push_back(p->name);
    ck.values.push_back(p->value);
  }
  ck.first_moments = optimizer_.first_moments();
  ck.second_moments = optimizer_.second_moments();
  ck.adam_steps = optimizer_.step_count();
  ck.history = history_;
  write_checkpoint(ck, path);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.config_hash != hash_)
    throw TrainingError("config hash mismatch: checkpoint " + ck.config_hash + ", run " + hash_);
  if (ck.vocab_words != data_.vocab.words()) throw TrainingError("checkpoint vocabulary does not match the corpus");
  auto list = model_->params().list();
  if (list.size() != ck.names.size()) throw TrainingError("checkpoint parameter count mismatch");
  for (size_t i = 0; i < list.size(); ++i) {
    if (list[i]->name != ck.names[i] || list[i]->value.rows() != ck.values[i].rows() ||
        list[i]->value.cols() != ck.values[i].cols())
      throw TrainingError("checkpoint parameter mismatch at " + ck.names[i]);
  }
  optimizer_.restore(ck.adam_steps, std::move(ck.first_moments), std::move(ck.second_moments));
  for (size_t i = 0; i < list.size(); ++i) list[i]->value = std::move(ck.values[i]);
  step_ = ck.step;
  history_ = std::move(ck.history);
}

// ---------------------------------------------------------------------------
// Checkpoint files: JSON header line, float32 payload, SHA-256 trailer line.

void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  json shapes = json::array();
  for (size_t i = 0; i < ck.names.size(); ++i)
    shapes.push_back({{"name", ck.names[i]}, {"rows", ck.values[i].rows()}, {"cols", ck.values[i].cols()}});
  json history = json::array();
  for (const auto& r : ck.history) history.push_back(record_to_json(r));
  const json header = {{"format", kCheckpointFormat},
                       {"version", kCheckpointVersion},
                       {"config_hash", ck.config_hash},
                       {"config", json::parse(config_to_json(ck.config))},
                       {"step", ck.step},
                       {"adam_steps", ck.adam_steps},
                       {"vocab", ck.vocab_words},
                       {"params", shapes},
                       {"has_moments", !ck.first_moments.empty()},
                       {"history", history}};
  std::ostringstream body(std::ios::binary);
  body << header.dump() << '\n';
  const auto write_all = [&](const std::vector<Matrix<float>>& ms) {
    for (const auto& m : ms) detail::write_le_floats(body, m.data(), static_cast<size_t>(m.size()));
  };
  write_all(ck.values);
  write_all(ck.first_moments);
  write_all(ck.second_moments);
  const std::string bytes = body.str();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << bytes << sha256_hex(bytes) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const size_t header_end = file.find('\n');
  if (header_end == std::string::npos || file.size() < header_end + 66)
    throw std::runtime_error("corrupt checkpoint: truncated file " + path.string());

  json header;
  try {
    header = json::parse(file.substr(0, header_end));
  } catch (const json::exception&) {
    throw std::runtime_error("corrupt checkpoint: unreadable header in " + path.string());
  }
  if (!header.is_object() || header.value("format", "") != kCheckpointFormat)
    throw std::runtime_error("corrupt checkpoint: not a checkpoint file " + path.string());
  if (header.value("version", -1) != kCheckpointVersion)
    throw std::runtime_error("checkpoint version mismatch: expected " + std::to_string(kCheckpointVersion));

  const std::string body = file.substr(0, file.size() - 65);
  const std::string trailer = file.substr(file.size() - 65, 64);
  if (file.back() != '\n' || sha256_hex(body) != trailer)
    throw std::runtime_error("corrupt checkpoint: checksum mismatch in " + path.string());

  Checkpoint ck;
  try {
    ck.config = header.at("config").get<PretrainConfig>();
    ck.config_hash = header.at("config_hash").get<std::string>();
    ck.step = header.at("step").get<int64_t>();
    ck.adam_steps = header.at("adam_steps").get<int64_t>();
    ck.vocab_words = header.at("vocab").get<std::vector<std::string>>();
    for (const auto& r : header.at("history")) ck.history.push_back(record_from_json(r, ck.config.weights));
    const bool moments = header.at("has_moments").get<bool>();
    size_t offset = header_end + 1;
    const auto read_block = [&](std::vector<Matrix<float>>& dst) {
      for (const auto& s : header.at("params")) {
        Matrix<float> m(s.at("rows").get<Index>(), s.at("cols").get<Index>());
        const size_t bytes = static_cast<size_t>(m.size()) * sizeof(float);
        if (offset + bytes > body.size()) throw std::runtime_error("corrupt checkpoint: payload too short");
        detail::decode_le_floats(body.data() + offset, m.data(), static_cast<size_t>(m.size()));
        offset += bytes;
        dst.push_back(std::move(m));
      }
    };
    for (const auto& s : header.at("params")) ck.names.push_back(s.at("name").get<std::string>());
    read_block(ck.values);
    if (moments) {
      read_block(ck.first_moments);
      read_block(ck.second_moments);
    }
    if (offset != body.size()) throw std::runtime_error("corrupt checkpoint: payload size mismatch");
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("corrupt checkpoint: ") + e.what());
  }
  if (config_hash(ck.config) != ck.config_hash) throw std::runtime_error("corrupt checkpoint: config hash mismatch");
  return ck;
}

std::unique_ptr<Model<float>> restore_model(const Checkpoint& ck) {
  auto model = std::make_unique<Model<float>>(ck.config.model);
  auto list = model->params().list();
  if (list.size() != ck.names.size()) throw std::runtime_error("checkpoint does not match its model config");
  for (size_t i = 0; i < list.size(); ++i) {
    if (list[i]->name != ck.names[i] || list[i]->value.rows() != ck.values[i].rows() ||
        list[i]->value.cols() != ck.values[i].cols())
      throw std::runtime_error("checkpoint parameter mismatch at " + ck.names[i]);
    list[i]->value = ck.values[i];
  }
  return model;
}

}  // namespace ecgtext
