#pragma once

#include <cstdint>
#include <vector>

#include "ecgtext/nn.hpp"

namespace ecgtext {

struct LossWeights {
  double mlm = 1.0;
  double mem = 1.0;
  double etm = 1.0;
  double ets = 1.0;

  void validate() const;
};

struct LossBreakdown {
  double mlm = 0.0;
  double mem = 0.0;
  double etm = 0.0;
  double ets = 0.0;
  LossWeights weights;
  double total = 0.0;
};

/// Weighted sum of the four parts. Throws on a negative weight.
double total_loss(const LossBreakdown& parts);

// Masked positions of one sequence and their original token ids.
struct MlmTargets {
  std::vector<int> positions;
  std::vector<int> ids;
};

enum class MlmReduction {
  kSumPerSequence,  // sum over masked positions, mean over the batch
  kTokenMean,       // mean over every masked token in the batch
};

struct MemLossOptions {
  bool masked_only = false;   // restrict to corrupted elements
  bool element_mean = false;  // divide each sample's sum by its element count
};

struct EtsOptions {
  bool normalize = false;  // unit-normalise rows, then scale by exp(logit_scale) and add logit_bias
};

struct ObjectiveConfig {
  MlmReduction mlm_reduction = MlmReduction::kSumPerSequence;
  MemLossOptions mem;
  EtsOptions ets;
};

// y_k: 1 where the batch text is the true pair. y_ij: +1 / -1.
struct PairLabels {
  std::vector<uint8_t> match;
  Matrix<float> pairwise;

  static PairLabels identity(Index batch);
  void validate() const;
};

// ---- tape ops -------------------------------------------------------------

// Sum over masked positions of -log softmax(logits[m])[target].
template <typename T>
Var<T> masked_token_nll(Var<T> logits, const MlmTargets& targets);

// Sum of (x_hat - target)^2, optionally weighted elementwise.
template <typename T>
Var<T> squared_error_sum(Var<T> x_hat, const Matrix<T>& target, const Matrix<T>* weight = nullptr);

// Mean binary cross-entropy of logits z (B x 1) against labels y.
template <typename T>
Var<T> etm_loss(Var<T> logits, const std::vector<uint8_t>& labels);

// -(1/B) sum_ij log sigmoid(y_ij * x_i . t_j); `labels` entries are +1 / -1.
template <typename T>
Var<T> ets_loss(Var<T> ecg_embeddings, Var<T> text_embeddings, const Matrix<T>& labels);

// Same loss over logits exp(log_scale) * x_i . t_j + bias, with 1x1 scale and bias.
template <typename T>
Var<T> ets_loss(Var<T> ecg_embeddings, Var<T> text_embeddings, const Matrix<T>& labels, Var<T> log_scale,
                Var<T> bias);

// ---- value-level losses (double precision, used by tests and tools) -------

double mlm_loss(const std::vector<Matrix<double>>& logits, const std::vector<MlmTargets>& targets,
                MlmReduction reduction = MlmReduction::kSumPerSequence);
double mem_loss(const std::vector<Matrix<double>>& x_hat, const std::vector<Matrix<double>>& x,
                const MemLossOptions& options = {}, const std::vector<Matrix<double>>* corruption = nullptr);
double etm_loss(const std::vector<double>& logits, const std::vector<uint8_t>& labels);
double ets_loss(const Matrix<double>& ecg_embeddings, const Matrix<double>& text_embeddings,
                const Matrix<double>& labels);

// ---- heads ----------------------------------------------------------------

struct MemDecoderConfig {
  int decoder_dim = 384;
  int n_layers = 2;
  int n_heads = 6;
  int ffn_dim = 1536;
  int upsample = 40;  // conv stride product of the ECG encoder

  void validate(int embed_dim) const;
};

// Linear to decoder_dim -> nearest-neighbour repeat to L rows, remainder rows
// take the learnable mask token -> sinusoidal positions -> pre-LN blocks ->
// layer norm -> linear to n_leads.
template <typename T>
class MemDecoder {
 public:
  MemDecoder() = default;
  MemDecoder(const MemDecoderConfig& config, int embed_dim, int n_leads, ParameterSet<T>& ps, Initializer& init,
             const std::string& prefix);

  Var<T> operator()(Tape<T>& tape, Var<T> ecg_span, int length) const;
  Parameter<T>& mask_token() const { return *mask_token_; }
  const Linear<T>& output() const { return output_; }

 private:
  MemDecoderConfig config_;
  Linear<T> embed_;
  Parameter<T>* mask_token_ = nullptr;
  std::vector<TransformerBlock<T>> blocks_;
  LayerNorm<T> norm_;
  Linear<T> output_;
};

// Row index map used by the decoder: positions past L_x * upsample map to the
// mask-token row (index L_x). Throws when L cannot be reached from L_x.
std::vector<int> mem_upsample_rows(int encoded_length, int length, int upsample);

}  // namespace ecgtext
