#include "ecgtext/model.hpp"

#include <cmath>
#include <stdexcept>

namespace ecgtext {

void ModelConfig::validate() const {
  ecg.validate();
  text.validate();
  fusion.validate();
  mem.validate(ecg.embed_dim);
  if (text.embed_dim != ecg.embed_dim || fusion.embed_dim != ecg.embed_dim)
    throw std::invalid_argument("ecg, text and fusion widths must agree");
  if (mem.upsample != ecg.stride_product())
    throw std::invalid_argument("mem upsample ratio must equal the conv stride product");
  if (projection_dim < 1) throw std::invalid_argument("projection_dim must be positive");
}

ModelConfig full_model_config(int vocab_size) {
  ModelConfig c;
  c.text.vocab_size = vocab_size;
  c.mem.upsample = c.ecg.stride_product();
  return c;
}

ModelConfig desk_model_config(int vocab_size) {
  ModelConfig c;
  c.ecg.conv_channels = {32, 64};
  c.ecg.conv_kernels = {7, 3};
  c.ecg.conv_strides = {5, 2};
  c.ecg.norm_groups = 8;
  c.ecg.embed_dim = 64;
  c.ecg.n_layers = 2;
  c.ecg.n_heads = 4;
  c.ecg.ffn_dim = 128;
  c.ecg.pos_conv_kernel = 15;
  c.ecg.pos_conv_groups = 16;
  c.text.vocab_size = vocab_size;
  c.text.embed_dim = 64;
  c.text.n_layers = 1;
  c.text.n_heads = 4;
  c.text.ffn_dim = 128;
  c.text.max_len = 16;
  c.fusion = {64, 4, 1, 128};
  c.mem.decoder_dim = 32;
  c.mem.n_layers = 1;
  c.mem.n_heads = 2;
  c.mem.ffn_dim = 64;
  c.mem.upsample = c.ecg.stride_product();
  c.projection_dim = 64;
  return c;
}

ModelConfig micro_model_config(int vocab_size) {
  ModelConfig c;
  c.ecg.conv_channels = {4, 8};
  c.ecg.conv_kernels = {3, 3};
  c.ecg.conv_strides = {5, 2};
  c.ecg.norm_groups = 2;
  c.ecg.embed_dim = 8;
  c.ecg.n_layers = 1;
  c.ecg.n_heads = 2;
  c.ecg.ffn_dim = 16;
  c.ecg.pos_conv_kernel = 3;
  c.ecg.pos_conv_groups = 2;
  c.text.vocab_size = vocab_size;
  c.text.embed_dim = 8;
  c.text.n_layers = 1;
  c.text.n_heads = 2;
  c.text.ffn_dim = 16;
  c.text.max_len = 8;
  c.fusion = {8, 2, 1, 16};
  c.mem.decoder_dim = 4;
  c.mem.n_layers = 1;
  c.mem.n_heads = 2;
  c.mem.ffn_dim = 8;
  c.mem.upsample = c.ecg.stride_product();
  c.projection_dim = 6;
  return c;
}

void TrainingBatch::validate() const {
  const size_t b = ecg.size();
  if (b == 0) throw std::invalid_argument("empty batch");
  if (ecg_target.size() != b || corruption.size() != b || text_clean.size() != b || text_masked.size() != b ||
      mlm.size() != b || labels.match.size() != b)
    throw std::invalid_argument("training batch fields disagree on batch size");
  labels.validate();
}

template <typename T>
Model<T>::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  Initializer init(config_.init_seed);
  const int d = config_.ecg.embed_dim;
  ecg_encoder_ = EcgEncoder<T>(config_.ecg, params_, init, "ecg_encoder");
  text_encoder_ = TextEncoder<T>(config_.text, params_, init, "text_encoder");
  fusion_ = Fusion<T>(config_.fusion, params_, init, "fusion");
  ecg_head_ = ProjectionHead<T>(params_, init, "ecg_head", d, config_.projection_dim);
  text_head_ = ProjectionHead<T>(params_, init, "text_head", d, config_.projection_dim);
  mlm_head_ = Linear<T>::make(params_, init, "mlm_head", d, config_.text.vocab_size);
  mem_decoder_ = MemDecoder<T>(config_.mem, d, config_.ecg.n_leads, params_, init, "mem_decoder");
  etm_head_ = Linear<T>::make(params_, init, "etm_head", d, 1);
  ets_log_scale_ = &params_.add("ets.log_scale", Matrix<T>::Constant(1, 1, static_cast<T>(std::log(10.0))), false);
  ets_bias_ = &params_.add("ets.bias", Matrix<T>::Constant(1, 1, T(-10)), false);
}

template <typename T>
ForwardResult<T> Model<T>::forward(Tape<T>& tape, const TrainingBatch& batch, const LossWeights& weights) const {
  weights.validate();
  batch.validate();
  const auto b = batch.size();
  const auto& obj = config_.objective;

  std::vector<Var<T>> nll, sq_err, etm_logits, x_emb, t_emb;
  std::vector<T> nll_w, sq_w;
  size_t masked_tokens = 0;
  for (const auto& m : batch.mlm) masked_tokens += m.positions.size();
  if (masked_tokens == 0) throw std::invalid_argument("mlm loss: no masked positions in the batch");

  for (size_t i = 0; i < b; ++i) {
    const Matrix<T> signal = batch.ecg[i].template cast<T>();
    const Var<T> ecg_hidden = ecg_encoder_(tape, signal);
    x_emb.push_back(ecg_head_(tape, ecg_hidden));
    const Var<T> text_clean = text_encoder_(tape, batch.text_clean[i]);
    t_emb.push_back(text_head_(tape, text_clean, batch.text_clean[i].mask));

    const Var<T> text_masked = text_encoder_(tape, batch.text_masked[i]);
    const FusedOutput<T> fused = fusion_(tape, ecg_hidden, text_masked, batch.text_masked[i].mask);

    const MlmTargets& targets = batch.mlm[i];
    if (!targets.positions.empty()) {
      MlmTargets local;
      local.ids = targets.ids;
      for (size_t k = 0; k < targets.positions.size(); ++k) local.positions.push_back(static_cast<int>(k));
      const Var<T> logits = mlm_head_(tape, gather_rows(fused.text_span(), targets.positions));
      nll.push_back(masked_token_nll(logits, local));
      nll_w.push_back(obj.mlm_reduction == MlmReduction::kTokenMean ? T(1) / static_cast<T>(masked_tokens)
                                                                    : T(1) / static_cast<T>(b));
    }

    const Matrix<T> target = batch.ecg_target[i].template cast<T>();
    const Var<T> x_hat = mem_decoder_(tape, fused.ecg_span(), static_cast<int>(target.rows()));
    if (obj.mem.masked_only) {
      const Matrix<T> w = batch.corruption[i].template cast<T>();
      sq_err.push_back(squared_error_sum(x_hat, target, &w));
    } else {
      sq_err.push_back(squared_error_sum(x_hat, target));
    }
    T w = T(1) / static_cast<T>(b);
    if (obj.mem.element_mean) w /= static_cast<T>(target.size());
    sq_w.push_back(w);

    etm_logits.push_back(etm_head_(tape, mean_rows(fused.fused)));
  }

  ForwardResult<T> out;
  out.mlm = weighted_sum(nll, nll_w);
  out.mem = weighted_sum(sq_err, sq_w);
  const Var<T> z = concat_rows(etm_logits);
  out.etm = etm_loss(z, batch.labels.match);
  const Matrix<T> y = batch.labels.pairwise.template cast<T>();
  const Var<T> xs = concat_rows(x_emb);
  const Var<T> ts = concat_rows(t_emb);
  if (obj.ets.normalize) {
    out.ets = ets_loss(l2_normalize_rows(xs), l2_normalize_rows(ts), y, tape.param(*ets_log_scale_),
                       tape.param(*ets_bias_));
  } else {
    out.ets = ets_loss(xs, ts, y);
  }
  out.total = weighted_sum<T>({out.mlm, out.mem, out.etm, out.ets},
                              {static_cast<T>(weights.mlm), static_cast<T>(weights.mem), static_cast<T>(weights.etm),
                               static_cast<T>(weights.ets)});

  LossBreakdown& br = out.breakdown;
  br.mlm = out.mlm.value()(0, 0);
  br.mem = out.mem.value()(0, 0);
  br.etm = out.etm.value()(0, 0);
  br.ets = out.ets.value()(0, 0);
  br.weights = weights;
  br.total = out.total.value()(0, 0);

  size_t correct = 0;
  for (size_t i = 0; i < b; ++i) {
    const double logit = z.value()(static_cast<Index>(i), 0);
    out.etm_logits.push_back(logit);
    if ((logit > 0.0) == (batch.labels.match[i] != 0)) ++correct;
  }
  out.etm_accuracy = static_cast<double>(correct) / static_cast<double>(b);
  return out;
}

template <typename T>
Var<T> Model<T>::ecg_embedding(Tape<T>& tape, const Matrix<float>& signal) const {
  const Matrix<T> s = signal.template cast<T>();
  return ecg_head_(tape, ecg_encoder_(tape, s));
}

template <typename T>
Var<T> Model<T>::text_embedding(Tape<T>& tape, const TokenSequence& tokens) const {
  return text_head_(tape, text_encoder_(tape, tokens), tokens.mask);
}

template class Model<float>;
template class Model<double>;

}  // namespace ecgtext
