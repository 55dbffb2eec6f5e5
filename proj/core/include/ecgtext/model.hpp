#pragma once

#include <cstdint>
#include <vector>

#include "ecgtext/corpus.hpp"
#include "ecgtext/encoders.hpp"
#include "ecgtext/fusion.hpp"
#include "ecgtext/objectives.hpp"

namespace ecgtext {

struct ModelConfig {
  EcgEncoderConfig ecg;
  TextEncoderConfig text;
  FusionConfig fusion;
  MemDecoderConfig mem;
  ObjectiveConfig objective;
  int projection_dim = 768;
  uint64_t init_seed = 0;

  // Throws when widths disagree; mem.upsample must equal the conv stride product.
  void validate() const;
};

// Full-size configuration. Hidden width 768 throughout.
ModelConfig full_model_config(int vocab_size);
// d=64, two ECG layers, one fusion block; sized for single-core CPU training.
ModelConfig desk_model_config(int vocab_size);
// d=8 config for finite-difference checks (signal length 40, max_len 8).
ModelConfig micro_model_config(int vocab_size);

// One pre-processed training batch. Row i pairs ecg[i] with text_clean[i].
struct TrainingBatch {
  std::vector<Matrix<float>> ecg;         // corrupted signal fed to the encoder (L x C)
  std::vector<Matrix<float>> ecg_target;  // uncorrupted signal, MEM target
  std::vector<Matrix<float>> corruption;  // 1 where an element was zeroed
  std::vector<TokenSequence> text_clean;
  std::vector<TokenSequence> text_masked;
  std::vector<MlmTargets> mlm;
  PairLabels labels;
  std::vector<int> substituted;  // batch rows whose text was swapped for a negative

  size_t size() const { return ecg.size(); }
  void validate() const;
};

template <typename T>
struct ForwardResult {
  Var<T> total;
  Var<T> mlm, mem, etm, ets;
  LossBreakdown breakdown;
  std::vector<double> etm_logits;
  double etm_accuracy = 0.0;
};

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ForwardResult<T> forward(Tape<T>& tape, const TrainingBatch& batch, const LossWeights& weights) const;

  // Projection-head embeddings x' and t' (eval mode, no masking).
  Var<T> ecg_embedding(Tape<T>& tape, const Matrix<float>& signal) const;
  Var<T> text_embedding(Tape<T>& tape, const TokenSequence& tokens) const;

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const MemDecoder<T>& mem_decoder() const { return mem_decoder_; }

 private:
  ModelConfig config_;
  ParameterSet<T> params_;
  EcgEncoder<T> ecg_encoder_;
  TextEncoder<T> text_encoder_;
  Fusion<T> fusion_;
  ProjectionHead<T> ecg_head_;
  ProjectionHead<T> text_head_;
  Linear<T> mlm_head_;
  MemDecoder<T> mem_decoder_;
  Linear<T> etm_head_;
  Parameter<T>* ets_log_scale_ = nullptr;
  Parameter<T>* ets_bias_ = nullptr;
};

}  // namespace ecgtext
