#pragma once

#include <vector>

#include "ecgtext/corpus.hpp"
#include "ecgtext/nn.hpp"

namespace ecgtext {

struct EcgEncoderConfig {
  int n_leads = 12;
  std::vector<int> conv_channels{64, 128, 256, 512};
  std::vector<int> conv_kernels{7, 3, 3, 3};
  std::vector<int> conv_strides{5, 2, 2, 2};
  int norm_groups = 8;
  int embed_dim = 768;
  int n_layers = 8;
  int n_heads = 12;
  int ffn_dim = 3072;
  int pos_conv_kernel = 31;
  int pos_conv_groups = 16;

  void validate() const;
  int stride_product() const;
};

struct TextEncoderConfig {
  int vocab_size = 32;
  int embed_dim = 768;
  int n_layers = 2;
  int n_heads = 4;
  int ffn_dim = 3072;
  int max_len = 64;

  void validate() const;
};

/// Sequence length after each conv stage for an input of `length` samples.
/// Each stage floor-divides by its stride; throws "conv underflow" on an empty stage.
std::vector<int> conv_stage_lengths(const EcgEncoderConfig& config, int length);
int encoded_length(const EcgEncoderConfig& config, int length);

// Conv feature extractor -> linear to d -> additive conv positional encoding
// -> pre-LN transformer blocks -> final layer norm.
template <typename T>
class EcgEncoder {
 public:
  EcgEncoder() = default;
  EcgEncoder(const EcgEncoderConfig& config, ParameterSet<T>& ps, Initializer& init, const std::string& prefix);

  Var<T> operator()(Tape<T>& tape, const Matrix<T>& signal, AttentionTrace<T>* trace = nullptr) const;
  const EcgEncoderConfig& config() const { return config_; }

 private:
  struct ConvStage {
    Parameter<T>* weight;
    Parameter<T>* bias;
    Parameter<T>* norm_gamma;
    Parameter<T>* norm_beta;
  };

  EcgEncoderConfig config_;
  std::vector<ConvStage> stages_;
  Linear<T> feature_projection_;
  Parameter<T>* pos_weight_ = nullptr;
  Parameter<T>* pos_bias_ = nullptr;
  std::vector<TransformerBlock<T>> blocks_;
  LayerNorm<T> final_norm_;
};

// Token + learned absolute position embeddings -> pre-LN blocks with PAD keys masked.
template <typename T>
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const TextEncoderConfig& config, ParameterSet<T>& ps, Initializer& init, const std::string& prefix);

  Var<T> operator()(Tape<T>& tape, const TokenSequence& tokens, AttentionTrace<T>* trace = nullptr) const;
  const TextEncoderConfig& config() const { return config_; }

 private:
  TextEncoderConfig config_;
  Parameter<T>* token_embedding_ = nullptr;
  Parameter<T>* position_embedding_ = nullptr;
  std::vector<TransformerBlock<T>> blocks_;
  LayerNorm<T> final_norm_;
};

// Mean pooling -> tanh -> dense. Text pooling covers valid positions only.
template <typename T>
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(ParameterSet<T>& ps, Initializer& init, const std::string& prefix, Index in_dim, Index out_dim);

  Var<T> operator()(Tape<T>& tape, Var<T> hidden) const;
  Var<T> operator()(Tape<T>& tape, Var<T> hidden, const std::vector<uint8_t>& valid) const;

  // Pooled and tanh-activated features before the dense layer.
  Var<T> activate(Tape<T>& tape, Var<T> hidden, const std::vector<uint8_t>* valid) const;
  const Linear<T>& dense() const { return dense_; }

 private:
  Linear<T> dense_;
};

}  // namespace ecgtext
