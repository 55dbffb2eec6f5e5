#include "ecgtext/fusion.hpp"

#include <stdexcept>

namespace ecgtext {

void FusionConfig::validate() const {
  if (n_heads < 1 || embed_dim % n_heads != 0) throw std::invalid_argument("fusion dim must be divisible by n_heads");
  if (n_blocks < 1 || ffn_dim < 1) throw std::invalid_argument("fusion n_blocks and ffn_dim must be positive");
}

template <typename T>
typename Fusion<T>::Stream Fusion<T>::make_stream(ParameterSet<T>& ps, Initializer& init, const std::string& name,
                                                  const FusionConfig& c) {
  Stream s;
  s.norm1 = LayerNorm<T>::make(ps, name + ".norm1", c.embed_dim);
  s.cross = MultiHeadAttention<T>::make(ps, init, name + ".cross", c.embed_dim, c.n_heads);
  s.norm2 = LayerNorm<T>::make(ps, name + ".norm2", c.embed_dim);
  s.ffn = FeedForward<T>::make(ps, init, name + ".ffn", c.embed_dim, c.ffn_dim);
  return s;
}

template <typename T>
Fusion<T>::Fusion(const FusionConfig& config, ParameterSet<T>& ps, Initializer& init, const std::string& prefix)
    : config_(config) {
  config_.validate();
  const int d = config_.embed_dim;
  ecg_projection_ = Linear<T>::make(ps, init, prefix + ".ecg_projection", d, d);
  text_projection_ = Linear<T>::make(ps, init, prefix + ".text_projection", d, d);
  ecg_modality_ = &ps.add(prefix + ".ecg_modality_embedding", init.normal<T>(1, d, 0.02), false);
  text_modality_ = &ps.add(prefix + ".text_modality_embedding", init.normal<T>(1, d, 0.02), false);
  for (int b = 0; b < config_.n_blocks; ++b) {
    const std::string name = prefix + ".block" + std::to_string(b);
    blocks_.push_back(Block{make_stream(ps, init, name + ".ecg", config_), make_stream(ps, init, name + ".text", config_)});
  }
  ecg_final_ = LayerNorm<T>::make(ps, prefix + ".ecg_final_norm", d);
  text_final_ = LayerNorm<T>::make(ps, prefix + ".text_final_norm", d);
}

template <typename T>
FusedOutput<T> Fusion<T>::operator()(Tape<T>& tape, Var<T> ecg, Var<T> text, const std::vector<uint8_t>& text_valid,
                                     FusionTrace<T>* trace) const {
  if (ecg.cols() != config_.embed_dim || text.cols() != config_.embed_dim)
    throw std::invalid_argument("fusion input width mismatch: expected " + std::to_string(config_.embed_dim));
  if (static_cast<Index>(text_valid.size()) != text.rows())
    throw std::invalid_argument("fusion text mask length mismatch");

  Var<T> e = add_row(ecg_projection_(tape, ecg), tape.param(*ecg_modality_));
  Var<T> t = add_row(text_projection_(tape, text), tape.param(*text_modality_));
  for (const Block& block : blocks_) {
    const Var<T> ne = block.ecg.norm1(tape, e);
    const Var<T> nt = block.text.norm1(tape, t);
    const Var<T> e_att =
        block.ecg.cross(tape, ne, nt, text_valid, trace != nullptr ? &trace->ecg_to_text : nullptr);
    const Var<T> t_att = block.text.cross(tape, nt, ne, {}, trace != nullptr ? &trace->text_to_ecg : nullptr);
    e = add(e, e_att);
    t = add(t, t_att);
    e = add(e, block.ecg.ffn(tape, block.ecg.norm2(tape, e)));
    t = add(t, block.text.ffn(tape, block.text.norm2(tape, t)));
  }
  e = ecg_final_(tape, e);
  t = text_final_(tape, t);
  FusedOutput<T> out;
  out.fused = concat_rows<T>({e, t});
  out.ecg_rows = e.rows();
  out.text_rows = t.rows();
  return out;
}

template class Fusion<float>;
template class Fusion<double>;

}  // namespace ecgtext
