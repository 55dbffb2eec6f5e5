#include "ecgtext/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace ecgtext {

void EcgEncoderConfig::validate() const {
  if (conv_channels.size() != conv_kernels.size() || conv_channels.size() != conv_strides.size())
    throw std::invalid_argument("conv_channels, conv_kernels and conv_strides must have equal length");
  if (n_leads < 1) throw std::invalid_argument("n_leads must be positive");
  for (size_t i = 0; i < conv_channels.size(); ++i) {
    if (conv_channels[i] < 1 || conv_kernels[i] < 1 || conv_strides[i] < 1)
      throw std::invalid_argument("conv stage parameters must be positive");
    if (conv_channels[i] % norm_groups != 0)
      throw std::invalid_argument("conv channels must be divisible by norm_groups");
  }
  if (n_layers < 1) throw std::invalid_argument("n_layers must be at least 1");
  if (n_heads < 1 || embed_dim % n_heads != 0) throw std::invalid_argument("embed_dim must be divisible by n_heads");
  if (pos_conv_groups < 1 || embed_dim % pos_conv_groups != 0)
    throw std::invalid_argument("embed_dim must be divisible by pos_conv_groups");
  if (pos_conv_kernel < 1 || ffn_dim < 1) throw std::invalid_argument("pos_conv_kernel and ffn_dim must be positive");
}

int EcgEncoderConfig::stride_product() const {
  int p = 1;
  for (int s : conv_strides) p *= s;
  return p;
}

void TextEncoderConfig::validate() const {
  if (vocab_size < 4) throw std::invalid_argument("vocab_size must cover the reserved ids");
  if (n_layers < 1) throw std::invalid_argument("n_layers must be at least 1");
  if (n_heads < 1 || embed_dim % n_heads != 0) throw std::invalid_argument("embed_dim must be divisible by n_heads");
  if (max_len < 1 || ffn_dim < 1) throw std::invalid_argument("max_len and ffn_dim must be positive");
}

std::vector<int> conv_stage_lengths(const EcgEncoderConfig& config, int length) {
  std::vector<int> out;
  int l = length;
  for (int s : config.conv_strides) {
    l /= s;
    if (l < 1) throw std::invalid_argument("conv underflow: signal of length " + std::to_string(length) +
                                           " is too short for the conv stack");
    out.push_back(l);
  }
  return out;
}

int encoded_length(const EcgEncoderConfig& config, int length) {
  const auto stages = conv_stage_lengths(config, length);
  return stages.empty() ? length : stages.back();
}

// ---------------------------------------------------------------------------

template <typename T>
EcgEncoder<T>::EcgEncoder(const EcgEncoderConfig& config, ParameterSet<T>& ps, Initializer& init,
                          const std::string& prefix)
    : config_(config) {
  config_.validate();
  int in_ch = config_.n_leads;
  for (size_t i = 0; i < config_.conv_channels.size(); ++i) {
    const std::string name = prefix + ".conv" + std::to_string(i);
    const int out_ch = config_.conv_channels[i];
    const int fan_in = in_ch * config_.conv_kernels[i];
    ConvStage st{};
    st.weight = &ps.add(name + ".weight", init.normal<T>(out_ch, fan_in, 1.0 / std::sqrt(double(fan_in))), true);
    st.bias = &ps.add(name + ".bias", Matrix<T>::Zero(1, out_ch), false);
    st.norm_gamma = &ps.add(name + ".norm.gamma", Matrix<T>::Ones(1, out_ch), false);
    st.norm_beta = &ps.add(name + ".norm.beta", Matrix<T>::Zero(1, out_ch), false);
    stages_.push_back(st);
    in_ch = out_ch;
  }
  const int d = config_.embed_dim;
  feature_projection_ = Linear<T>::make(ps, init, prefix + ".feature_projection", in_ch, d);
  const int pos_fan_in = (d / config_.pos_conv_groups) * config_.pos_conv_kernel;
  pos_weight_ =
      &ps.add(prefix + ".pos_conv.weight", init.normal<T>(d, pos_fan_in, 1.0 / std::sqrt(double(pos_fan_in))), true);
  pos_bias_ = &ps.add(prefix + ".pos_conv.bias", Matrix<T>::Zero(1, d), false);
  for (int l = 0; l < config_.n_layers; ++l)
    blocks_.push_back(TransformerBlock<T>::make(ps, init, prefix + ".layer" + std::to_string(l), d, config_.n_heads,
                                                config_.ffn_dim));
  final_norm_ = LayerNorm<T>::make(ps, prefix + ".final_norm", d);
}

template <typename T>
Var<T> EcgEncoder<T>::operator()(Tape<T>& tape, const Matrix<T>& signal, AttentionTrace<T>* trace) const {
  if (signal.cols() != config_.n_leads)
    throw std::invalid_argument("ecg encoder expects " + std::to_string(config_.n_leads) + " leads, got " +
                                std::to_string(signal.cols()));
  const auto lengths = conv_stage_lengths(config_, static_cast<int>(signal.rows()));
  Var<T> x = tape.constant(signal);
  for (size_t i = 0; i < stages_.size(); ++i) {
    const ConvStage& st = stages_[i];
    ConvGeometry g;
    g.kernel = config_.conv_kernels[i];
    g.stride = config_.conv_strides[i];
    g.pad_left = (g.kernel - 1) / 2;
    g.out_len = lengths[i];
    x = conv1d(x, tape.param(*st.weight), tape.param(*st.bias), g);
    x = gelu(x);
    x = group_norm(x, config_.norm_groups, tape.param(*st.norm_gamma), tape.param(*st.norm_beta));
  }
  x = feature_projection_(tape, x);

  ConvGeometry pg;
  pg.kernel = config_.pos_conv_kernel;
  pg.stride = 1;
  pg.pad_left = config_.pos_conv_kernel / 2;
  pg.out_len = static_cast<int>(x.rows());
  pg.groups = config_.pos_conv_groups;
  x = add(x, gelu(conv1d(x, tape.param(*pos_weight_), tape.param(*pos_bias_), pg)));

  for (const auto& block : blocks_) x = block(tape, x, {}, trace);
  return final_norm_(tape, x);
}

// ---------------------------------------------------------------------------

template <typename T>
TextEncoder<T>::TextEncoder(const TextEncoderConfig& config, ParameterSet<T>& ps, Initializer& init,
                            const std::string& prefix)
    : config_(config) {
  config_.validate();
  const int d = config_.embed_dim;
  token_embedding_ = &ps.add(prefix + ".token_embedding", init.normal<T>(config_.vocab_size, d, 1.0), true);
  position_embedding_ = &ps.add(prefix + ".position_embedding", init.normal<T>(config_.max_len, d, 0.1), true);
  for (int l = 0; l < config_.n_layers; ++l)
    blocks_.push_back(TransformerBlock<T>::make(ps, init, prefix + ".layer" + std::to_string(l), d, config_.n_heads,
                                                config_.ffn_dim));
  final_norm_ = LayerNorm<T>::make(ps, prefix + ".final_norm", d);
}

template <typename T>
Var<T> TextEncoder<T>::operator()(Tape<T>& tape, const TokenSequence& tokens, AttentionTrace<T>* trace) const {
  if (static_cast<int>(tokens.ids.size()) != config_.max_len || tokens.mask.size() != tokens.ids.size())
    throw std::invalid_argument("token sequence must be padded to max_len " + std::to_string(config_.max_len));
  for (int id : tokens.ids)
    if (id < 0 || id >= config_.vocab_size) throw std::out_of_range("token out of range: " + std::to_string(id));
  if (tokens.valid_count() == 0) throw std::invalid_argument("empty text: no valid token positions");
  Var<T> x = gather_rows(tape.param(*token_embedding_), tokens.ids);
  x = add(x, tape.param(*position_embedding_));
  for (const auto& block : blocks_) x = block(tape, x, tokens.mask, trace);
  return final_norm_(tape, x);
}

// ---------------------------------------------------------------------------

template <typename T>
ProjectionHead<T>::ProjectionHead(ParameterSet<T>& ps, Initializer& init, const std::string& prefix, Index in_dim,
                                  Index out_dim)
    : dense_(Linear<T>::make(ps, init, prefix + ".dense", in_dim, out_dim)) {}

template <typename T>
Var<T> ProjectionHead<T>::activate(Tape<T>& tape, Var<T> hidden, const std::vector<uint8_t>* valid) const {
  (void)tape;
  const Var<T> pooled = valid == nullptr ? mean_rows(hidden) : masked_mean_rows(hidden, *valid);
  return tanh(pooled);
}

template <typename T>
Var<T> ProjectionHead<T>::operator()(Tape<T>& tape, Var<T> hidden) const {
  return dense_(tape, activate(tape, hidden, nullptr));
}

template <typename T>
Var<T> ProjectionHead<T>::operator()(Tape<T>& tape, Var<T> hidden, const std::vector<uint8_t>& valid) const {
  return dense_(tape, activate(tape, hidden, &valid));
}

template class EcgEncoder<float>;
template class EcgEncoder<double>;
template class TextEncoder<float>;
template class TextEncoder<double>;
template class ProjectionHead<float>;
template class ProjectionHead<double>;

}  // namespace ecgtext
