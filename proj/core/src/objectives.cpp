#include "ecgtext/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace ecgtext {

namespace {

// log(1 + exp(x)) without overflow.
template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

void LossWeights::validate() const {
  if (mlm < 0 || mem < 0 || etm < 0 || ets < 0) throw std::invalid_argument("loss weights must be non-negative");
}

PairLabels PairLabels::identity(Index batch) {
  PairLabels labels;
  labels.match.assign(static_cast<size_t>(batch), 1);
  labels.pairwise = Matrix<float>::Constant(batch, batch, -1.0f);
  labels.pairwise.diagonal().setOnes();
  return labels;
}

void PairLabels::validate() const {
  const auto b = static_cast<Index>(match.size());
  if (pairwise.rows() != b || pairwise.cols() != b) throw std::invalid_argument("pair labels shape mismatch");
  for (Index i = 0; i < b; ++i) {
    for (Index j = 0; j < b; ++j) {
      const float y = pairwise(i, j);
      if (y != 1.0f && y != -1.0f) throw std::invalid_argument("pairwise labels must be +1 or -1");
      if (i != j && y != -1.0f) throw std::invalid_argument("off-diagonal pairwise labels must be -1");
    }
    if ((pairwise(i, i) == 1.0f) != (match[static_cast<size_t>(i)] != 0))
      throw std::invalid_argument("pairwise diagonal disagrees with match labels");
  }
}

double total_loss(const LossBreakdown& parts) {
  parts.weights.validate();
  const auto& w = parts.weights;
  return w.mlm * parts.mlm + w.mem * parts.mem + w.etm * parts.etm + w.ets * parts.ets;
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> masked_token_nll(Var<T> logits, const MlmTargets& targets) {
  Tape<T>& t = *logits.tape;
  const Matrix<T>& z = logits.value();
  if (targets.positions.size() != targets.ids.size()) throw std::invalid_argument("mlm targets size mismatch");
  Matrix<T> probs(static_cast<Index>(targets.positions.size()), z.cols());
  T total = 0;
  for (size_t i = 0; i < targets.positions.size(); ++i) {
    const int pos = targets.positions[i];
    const int id = targets.ids[i];
    if (pos < 0 || pos >= z.rows() || id < 0 || id >= z.cols()) throw std::out_of_range("mlm target out of range");
    const auto row = z.row(pos);
    const T mx = row.maxCoeff();
    const T lse = mx + std::log((row.array() - mx).exp().sum());
    total += lse - row(id);
    probs.row(static_cast<Index>(i)) = (row.array() - lse).exp();
  }
  Matrix<T> v(1, 1);
  v(0, 0) = total;
  const bool ng = t.needs_grad(logits);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, logits, out, targets, probs = std::move(probs)] {
      const T g = t.grad(out)(0, 0);
      Matrix<T>& gz = t.grad(logits);
      for (size_t i = 0; i < targets.positions.size(); ++i) {
        gz.row(targets.positions[i]) += g * probs.row(static_cast<Index>(i));
        gz(targets.positions[i], targets.ids[i]) -= g;
      }
    });
  }
  return out;
}

template <typename T>
Var<T> squared_error_sum(Var<T> x_hat, const Matrix<T>& target, const Matrix<T>* weight) {
  Tape<T>& t = *x_hat.tape;
  if (x_hat.rows() != target.rows() || x_hat.cols() != target.cols())
    throw std::invalid_argument("mem loss shape mismatch");
  if (weight != nullptr && (weight->rows() != target.rows() || weight->cols() != target.cols()))
    throw std::invalid_argument("mem loss weight shape mismatch");
  Matrix<T> diff = x_hat.value() - target;
  if (weight != nullptr) diff = diff.cwiseProduct(*weight);
  Matrix<T> v(1, 1);
  v(0, 0) = weight != nullptr ? diff.cwiseProduct(x_hat.value() - target).sum() : diff.squaredNorm();
  const bool ng = t.needs_grad(x_hat);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, x_hat, out, diff = std::move(diff)] { t.grad(x_hat) += T(2) * t.grad(out)(0, 0) * diff; });
  }
  return out;
}

template <typename T>
Var<T> etm_loss(Var<T> logits, const std::vector<uint8_t>& labels) {
  Tape<T>& t = *logits.tape;
  const Matrix<T>& z = logits.value();
  if (z.cols() != 1 || z.rows() != static_cast<Index>(labels.size()) || labels.empty())
    throw std::invalid_argument("etm loss expects one logit per label");
  const auto b = static_cast<T>(labels.size());
  T total = 0;
  for (Index k = 0; k < z.rows(); ++k) total += labels[static_cast<size_t>(k)] ? softplus(-z(k, 0)) : softplus(z(k, 0));
  Matrix<T> v(1, 1);
  v(0, 0) = total / b;
  const bool ng = t.needs_grad(logits);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, logits, out, labels, b] {
      const T g = t.grad(out)(0, 0) / b;
      const Matrix<T>& z = t.value(logits);
      Matrix<T>& gz = t.grad(logits);
      for (Index k = 0; k < z.rows(); ++k) gz(k, 0) += g * (sigmoid(z(k, 0)) - T(labels[static_cast<size_t>(k)] ? 1 : 0));
    });
  }
  return out;
}

namespace {

template <typename T>
Var<T> ets_loss_impl(Var<T> ecg_embeddings, Var<T> text_embeddings, const Matrix<T>& labels, const Var<T>* log_scale,
                     const Var<T>* bias) {
  Tape<T>& t = *ecg_embeddings.tape;
  const Matrix<T>& x = ecg_embeddings.value();
  const Matrix<T>& tt = text_embeddings.value();
  const Index b = x.rows();
  if (tt.rows() != b || x.cols() != tt.cols() || labels.rows() != b || labels.cols() != b || b == 0)
    throw std::invalid_argument("ets loss shape mismatch");
  const T s = log_scale != nullptr ? std::exp(log_scale->value()(0, 0)) : T(1);
  const T c = bias != nullptr ? bias->value()(0, 0) : T(0);
  const Matrix<T> dots = x * tt.transpose();
  T total = 0;
  Matrix<T> dlogits(b, b);
  for (Index i = 0; i < b; ++i) {
    for (Index j = 0; j < b; ++j) {
      const T y = labels(i, j);
      const T a = y * (s * dots(i, j) + c);
      total += softplus(-a);
      dlogits(i, j) = -y * sigmoid(-a) / static_cast<T>(b);
    }
  }
  Matrix<T> v(1, 1);
  v(0, 0) = total / static_cast<T>(b);
  const Var<T> ls = log_scale != nullptr ? *log_scale : Var<T>{};
  const Var<T> bs = bias != nullptr ? *bias : Var<T>{};
  const bool ng = t.needs_grad(ecg_embeddings) || t.needs_grad(text_embeddings) ||
                  (ls.valid() && t.needs_grad(ls)) || (bs.valid() && t.needs_grad(bs));
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, ecg_embeddings, text_embeddings, out, ls, bs, s, dots, dlogits = std::move(dlogits)] {
      const Matrix<T> d = dlogits * t.grad(out)(0, 0);
      if (t.needs_grad(ecg_embeddings)) t.grad(ecg_embeddings).noalias() += s * d * t.value(text_embeddings);
      if (t.needs_grad(text_embeddings))
        t.grad(text_embeddings).noalias() += s * d.transpose() * t.value(ecg_embeddings);
      if (ls.valid() && t.needs_grad(ls)) t.grad(ls)(0, 0) += s * d.cwiseProduct(dots).sum();
      if (bs.valid() && t.needs_grad(bs)) t.grad(bs)(0, 0) += d.sum();
    });
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> ets_loss(Var<T> ecg_embeddings, Var<T> text_embeddings, const Matrix<T>& labels) {
  return ets_loss_impl<T>(ecg_embeddings, text_embeddings, labels, nullptr, nullptr);
}

template <typename T>
Var<T> ets_loss(Var<T> ecg_embeddings, Var<T> text_embeddings, const Matrix<T>& labels, Var<T> log_scale,
                Var<T> bias) {
  if (log_scale.rows() != 1 || log_scale.cols() != 1 || bias.rows() != 1 || bias.cols() != 1)
    throw std::invalid_argument("ets scale and bias must be scalars");
  return ets_loss_impl<T>(ecg_embeddings, text_embeddings, labels, &log_scale, &bias);
}

// ---------------------------------------------------------------------------

double mlm_loss(const std::vector<Matrix<double>>& logits, const std::vector<MlmTargets>& targets,
                MlmReduction reduction) {
  if (logits.size() != targets.size() || logits.empty()) throw std::invalid_argument("mlm batch size mismatch");
  size_t masked = 0;
  for (const auto& tg : targets) masked += tg.positions.size();
  if (masked == 0) throw std::invalid_argument("mlm loss: no masked positions in the batch");
  Tape<double> tape;
  double sum = 0.0;
  for (size_t j = 0; j < logits.size(); ++j) sum += masked_token_nll(tape.constant(logits[j]), targets[j]).value()(0, 0);
  return reduction == MlmReduction::kTokenMean ? sum / static_cast<double>(masked)
                                               : sum / static_cast<double>(logits.size());
}

double mem_loss(const std::vector<Matrix<double>>& x_hat, const std::vector<Matrix<double>>& x,
                const MemLossOptions& options, const std::vector<Matrix<double>>* corruption) {
  if (x_hat.size() != x.size() || x.empty()) throw std::invalid_argument("mem batch size mismatch");
  if (options.masked_only && (corruption == nullptr || corruption->size() != x.size()))
    throw std::invalid_argument("masked-only mem loss needs a corruption mask per sample");
  Tape<double> tape;
  double sum = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const Matrix<double>* w = options.masked_only ? &(*corruption)[i] : nullptr;
    double s = squared_error_sum(tape.constant(x_hat[i]), x[i], w).value()(0, 0);
    if (options.element_mean) s /= static_cast<double>(x[i].size());
    sum += s;
  }
  return sum / static_cast<double>(x.size());
}

double etm_loss(const std::vector<double>& logits, const std::vector<uint8_t>& labels) {
  Tape<double> tape;
  Matrix<double> z(static_cast<Index>(logits.size()), 1);
  for (size_t k = 0; k < logits.size(); ++k) z(static_cast<Index>(k), 0) = logits[k];
  return etm_loss(tape.constant(z), labels).value()(0, 0);
}

double ets_loss(const Matrix<double>& ecg_embeddings, const Matrix<double>& text_embeddings,
                const Matrix<double>& labels) {
  Tape<double> tape;
  return ets_loss(tape.constant(ecg_embeddings), tape.constant(text_embeddings), labels).value()(0, 0);
}

// ---------------------------------------------------------------------------

void MemDecoderConfig::validate(int embed_dim) const {
  if (decoder_dim < 1 || decoder_dim > embed_dim) throw std::invalid_argument("decoder_dim must lie in [1, d]");
  if (n_layers < 0 || ffn_dim < 1 || upsample < 1) throw std::invalid_argument("invalid mem decoder config");
  if (n_heads < 1 || decoder_dim % n_heads != 0)
    throw std::invalid_argument("decoder_dim must be divisible by n_heads");
}

std::vector<int> mem_upsample_rows(int encoded_length, int length, int upsample) {
  if (encoded_length < 1 || length < 1 || upsample < 1) throw std::invalid_argument("mem upsample: empty input");
  if (encoded_length != length / upsample)
    throw std::invalid_argument("mem upsample: length " + std::to_string(length) + " is not reachable from " +
                                std::to_string(encoded_length) + " rows at ratio " + std::to_string(upsample));
  std::vector<int> rows(static_cast<size_t>(length));
  for (int r = 0; r < length; ++r) rows[static_cast<size_t>(r)] = std::min(r / upsample, encoded_length);
  return rows;
}

template <typename T>
MemDecoder<T>::MemDecoder(const MemDecoderConfig& config, int embed_dim, int n_leads, ParameterSet<T>& ps,
                          Initializer& init, const std::string& prefix)
    : config_(config) {
  config_.validate(embed_dim);
  const int dd = config_.decoder_dim;
  embed_ = Linear<T>::make(ps, init, prefix + ".embed", embed_dim, dd);
  mask_token_ = &ps.add(prefix + ".mask_token", init.normal<T>(1, dd, 0.02), false);
  for (int l = 0; l < config_.n_layers; ++l)
    blocks_.push_back(
        TransformerBlock<T>::make(ps, init, prefix + ".layer" + std::to_string(l), dd, config_.n_heads, config_.ffn_dim));
  norm_ = LayerNorm<T>::make(ps, prefix + ".norm", dd);
  output_ = Linear<T>::make(ps, init, prefix + ".output", dd, n_leads);
}

template <typename T>
Var<T> MemDecoder<T>::operator()(Tape<T>& tape, Var<T> ecg_span, int length) const {
  const auto rows = mem_upsample_rows(static_cast<int>(ecg_span.rows()), length, config_.upsample);
  const Var<T> table = concat_rows<T>({embed_(tape, ecg_span), tape.param(*mask_token_)});
  Var<T> x = gather_rows(table, rows);
  x = add(x, tape.constant(sinusoidal_positions<T>(length, config_.decoder_dim)));
  for (const auto& block : blocks_) x = block(tape, x, {}, nullptr);
  return output_(tape, norm_(tape, x));
}

#define ECGTEXT_INSTANTIATE_OBJECTIVES(T)                                                   \
  template Var<T> masked_token_nll<T>(Var<T>, const MlmTargets&);                           \
  template Var<T> squared_error_sum<T>(Var<T>, const Matrix<T>&, const Matrix<T>*);         \
  template Var<T> etm_loss<T>(Var<T>, const std::vector<uint8_t>&);                         \
  template Var<T> ets_loss<T>(Var<T>, Var<T>, const Matrix<T>&);                            \
  template Var<T> ets_loss<T>(Var<T>, Var<T>, const Matrix<T>&, Var<T>, Var<T>);            \
  template class MemDecoder<T>;

ECGTEXT_INSTANTIATE_OBJECTIVES(float)
ECGTEXT_INSTANTIATE_OBJECTIVES(double)

#undef ECGTEXT_INSTANTIATE_OBJECTIVES

}  // namespace ecgtext
