#include "ecgtext/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ecgtext {

template <typename T>
Parameter<T>& ParameterSet<T>::add(const std::string& name, Matrix<T> init, bool decay) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Parameter<T> p;
  p.name = name;
  p.value = std::move(init);
  p.decay = decay;
  p.zero_grad();
  params_.push_back(std::move(p));
  index_.emplace(name, params_.size() - 1);
  return params_.back();
}

template <typename T>
Parameter<T>* ParameterSet<T>::find(const std::string& name) {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
const Parameter<T>* ParameterSet<T>::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
Parameter<T>& ParameterSet<T>::at(const std::string& name) {
  Parameter<T>* p = find(name);
  if (p == nullptr) throw std::out_of_range("unknown parameter: " + name);
  return *p;
}

template <typename T>
std::vector<Parameter<T>*> ParameterSet<T>::list() {
  std::vector<Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> ParameterSet<T>::list() const {
  std::vector<const Parameter<T>*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
size_t ParameterSet<T>::scalar_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += static_cast<size_t>(p.value.size());
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
Matrix<T> Initializer::normal(Index rows, Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix<T> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng_));
  return m;
}

template <typename T>
Linear<T> Linear<T>::make(ParameterSet<T>& ps, Initializer& init, const std::string& name, Index in, Index out) {
  Linear l;
  l.weight = &ps.add(name + ".weight", init.normal<T>(in, out, 1.0 / std::sqrt(static_cast<double>(in))), true);
  l.bias = &ps.add(name + ".bias", Matrix<T>::Zero(1, out), false);
  return l;
}

template <typename T>
Var<T> Linear<T>::operator()(Tape<T>& tape, Var<T> x) const {
  return add_row(matmul(x, tape.param(*weight)), tape.param(*bias));
}

template <typename T>
LayerNorm<T> LayerNorm<T>::make(ParameterSet<T>& ps, const std::string& name, Index dim) {
  LayerNorm n;
  n.gamma = &ps.add(name + ".gamma", Matrix<T>::Ones(1, dim), false);
  n.beta = &ps.add(name + ".beta", Matrix<T>::Zero(1, dim), false);
  return n;
}

template <typename T>
Var<T> LayerNorm<T>::operator()(Tape<T>& tape, Var<T> x) const {
  return layer_norm(x, tape.param(*gamma), tape.param(*beta));
}

template <typename T>
MultiHeadAttention<T> MultiHeadAttention<T>::make(ParameterSet<T>& ps, Initializer& init, const std::string& name,
                                                  Index dim, int n_heads) {
  if (n_heads < 1 || dim % n_heads != 0) throw std::invalid_argument(name + ": dim must be divisible by n_heads");
  MultiHeadAttention a;
  a.query = Linear<T>::make(ps, init, name + ".query", dim, dim);
  a.key = Linear<T>::make(ps, init, name + ".key", dim, dim);
  a.value = Linear<T>::make(ps, init, name + ".value", dim, dim);
  a.output = Linear<T>::make(ps, init, name + ".output", dim, dim);
  a.n_heads = n_heads;
  return a;
}

template <typename T>
Var<T> MultiHeadAttention<T>::operator()(Tape<T>& tape, Var<T> q_in, Var<T> kv_in,
                                         const std::vector<uint8_t>& key_valid, AttentionTrace<T>* trace) const {
  const Var<T> q = query(tape, q_in);
  const Var<T> k = key(tape, kv_in);
  const Var<T> v = value(tape, kv_in);
  const Index head_dim = q.cols() / n_heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_dim));
  std::vector<Var<T>> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const Index c0 = h * head_dim;
    const Var<T> qh = n_heads == 1 ? q : slice_cols(q, c0, head_dim);
    const Var<T> kh = n_heads == 1 ? k : slice_cols(k, c0, head_dim);
    const Var<T> vh = n_heads == 1 ? v : slice_cols(v, c0, head_dim);
    const Var<T> probs = masked_softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), key_valid);
    if (trace != nullptr) trace->push_back(probs.value());
    heads.push_back(matmul(probs, vh));
  }
  const Var<T> merged = n_heads == 1 ? heads.front() : concat_cols(heads);
  return output(tape, merged);
}

template <typename T>
FeedForward<T> FeedForward<T>::make(ParameterSet<T>& ps, Initializer& init, const std::string& name, Index dim,
                                    Index hidden) {
  return FeedForward{Linear<T>::make(ps, init, name + ".up", dim, hidden),
                     Linear<T>::make(ps, init, name + ".down", hidden, dim)};
}

template <typename T>
Var<T> FeedForward<T>::operator()(Tape<T>& tape, Var<T> x) const {
  return down(tape, gelu(up(tape, x)));
}

template <typename T>
TransformerBlock<T> TransformerBlock<T>::make(ParameterSet<T>& ps, Initializer& init, const std::string& name,
                                              Index dim, int n_heads, Index ffn_dim) {
  TransformerBlock b;
  b.norm1 = LayerNorm<T>::make(ps, name + ".norm1", dim);
  b.attention = MultiHeadAttention<T>::make(ps, init, name + ".attn", dim, n_heads);
  b.norm2 = LayerNorm<T>::make(ps, name + ".norm2", dim);
  b.ffn = FeedForward<T>::make(ps, init, name + ".ffn", dim, ffn_dim);
  return b;
}

template <typename T>
Var<T> TransformerBlock<T>::operator()(Tape<T>& tape, Var<T> x, const std::vector<uint8_t>& key_valid,
                                       AttentionTrace<T>* trace) const {
  const Var<T> h = norm1(tape, x);
  x = add(x, attention(tape, h, h, key_valid, trace));
  return add(x, ffn(tape, norm2(tape, x)));
}

template <typename T>
Matrix<T> sinusoidal_positions(Index rows, Index dim) {
  Matrix<T> pe(rows, dim);
  for (Index p = 0; p < rows; ++p) {
    for (Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(p) * freq;
      pe(p, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template Matrix<float> Initializer::normal<float>(Index, Index, double);
template Matrix<double> Initializer::normal<double>(Index, Index, double);
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template struct FeedForward<float>;
template struct FeedForward<double>;
template struct TransformerBlock<float>;
template struct TransformerBlock<double>;
template Matrix<float> sinusoidal_positions<float>(Index, Index);
template Matrix<double> sinusoidal_positions<double>(Index, Index);

}  // namespace ecgtext
