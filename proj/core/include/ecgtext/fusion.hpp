#pragma once

#include <vector>

#include "ecgtext/nn.hpp"

namespace ecgtext {

struct FusionConfig {
  int embed_dim = 768;
  int n_heads = 12;
  int n_blocks = 2;
  int ffn_dim = 3072;

  void validate() const;
};

// H_f rows are [ECG rows; text rows].
template <typename T>
struct FusedOutput {
  Var<T> fused;
  Index ecg_rows = 0;
  Index text_rows = 0;

  Var<T> ecg_span() const { return slice_rows(fused, 0, ecg_rows); }
  Var<T> text_span() const { return slice_rows(fused, ecg_rows, text_rows); }
};

template <typename T>
struct FusionTrace {
  AttentionTrace<T> ecg_to_text;  // ECG queries over text keys
  AttentionTrace<T> text_to_ecg;
};

// Bidirectional cross-attention fusion. Each block updates both streams from
// the pre-block state of the other stream; PAD text positions are masked as keys.
template <typename T>
class Fusion {
 public:
  Fusion() = default;
  Fusion(const FusionConfig& config, ParameterSet<T>& ps, Initializer& init, const std::string& prefix);

  FusedOutput<T> operator()(Tape<T>& tape, Var<T> ecg, Var<T> text, const std::vector<uint8_t>& text_valid,
                            FusionTrace<T>* trace = nullptr) const;
  const FusionConfig& config() const { return config_; }

 private:
  struct Stream {
    LayerNorm<T> norm1;
    MultiHeadAttention<T> cross;
    LayerNorm<T> norm2;
    FeedForward<T> ffn;
  };
  struct Block {
    Stream ecg;
    Stream text;
  };

  static Stream make_stream(ParameterSet<T>& ps, Initializer& init, const std::string& name, const FusionConfig& c);

  FusionConfig config_;
  Linear<T> ecg_projection_;
  Linear<T> text_projection_;
  Parameter<T>* ecg_modality_ = nullptr;
  Parameter<T>* text_modality_ = nullptr;
  std::vector<Block> blocks_;
  LayerNorm<T> ecg_final_;
  LayerNorm<T> text_final_;
};

}  // namespace ecgtext
