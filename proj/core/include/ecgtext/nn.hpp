#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ecgtext/autograd.hpp"

namespace ecgtext {

// Owns parameters at stable addresses; iteration follows creation order.
template <typename T>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Parameter<T>& add(const std::string& name, Matrix<T> init, bool decay);
  Parameter<T>* find(const std::string& name);
  const Parameter<T>* find(const std::string& name) const;
  Parameter<T>& at(const std::string& name);

  std::vector<Parameter<T>*> list();
  std::vector<const Parameter<T>*> list() const;
  size_t size() const { return params_.size(); }
  size_t scalar_count() const;
  void zero_grad();

  // Copies values by name from another set (any scalar type); names and shapes must match.
  template <typename U>
  void copy_values_from(const ParameterSet<U>& other);

 private:
  std::deque<Parameter<T>> params_;
  std::map<std::string, size_t> index_;
};

// Draws initial values in double precision so float and double models built
// from the same seed agree up to rounding.
class Initializer {
 public:
  explicit Initializer(uint64_t seed) : rng_(seed) {}

  template <typename T>
  Matrix<T> normal(Index rows, Index cols, double stddev);

 private:
  std::mt19937_64 rng_;
};

template <typename T>
using AttentionTrace = std::vector<Matrix<T>>;

template <typename T>
struct Linear {
  Parameter<T>* weight = nullptr;  // in x out
  Parameter<T>* bias = nullptr;    // 1 x out

  static Linear make(ParameterSet<T>& ps, Initializer& init, const std::string& name, Index in, Index out);
  Var<T> operator()(Tape<T>& tape, Var<T> x) const;
};

template <typename T>
struct LayerNorm {
  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;

  static LayerNorm make(ParameterSet<T>& ps, const std::string& name, Index dim);
  Var<T> operator()(Tape<T>& tape, Var<T> x) const;
};

template <typename T>
struct MultiHeadAttention {
  Linear<T> query, key, value, output;
  int n_heads = 1;

  static MultiHeadAttention make(ParameterSet<T>& ps, Initializer& init, const std::string& name, Index dim,
                                 int n_heads);
  // Queries from `q_in`, keys/values from `kv_in`; keys with key_valid == 0 are ignored.
  Var<T> operator()(Tape<T>& tape, Var<T> q_in, Var<T> kv_in, const std::vector<uint8_t>& key_valid,
                    AttentionTrace<T>* trace) const;
};

template <typename T>
struct FeedForward {
  Linear<T> up, down;

  static FeedForward make(ParameterSet<T>& ps, Initializer& init, const std::string& name, Index dim, Index hidden);
  Var<T> operator()(Tape<T>& tape, Var<T> x) const;
};

// Pre-LN self-attention block: x + attn(ln(x)), then x + ffn(ln(x)).
template <typename T>
struct TransformerBlock {
  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> attention;
  FeedForward<T> ffn;

  static TransformerBlock make(ParameterSet<T>& ps, Initializer& init, const std::string& name, Index dim,
                               int n_heads, Index ffn_dim);
  Var<T> operator()(Tape<T>& tape, Var<T> x, const std::vector<uint8_t>& key_valid, AttentionTrace<T>* trace) const;
};

// Fixed sinusoidal position table (rows x dim).
template <typename T>
Matrix<T> sinusoidal_positions(Index rows, Index dim);

template <typename T>
template <typename U>
void ParameterSet<T>::copy_values_from(const ParameterSet<U>& other) {
  for (const Parameter<U>* src : other.list()) {
    Parameter<T>& dst = at(src->name);
    if (dst.value.rows() != src->value.rows() || dst.value.cols() != src->value.cols())
      throw std::invalid_argument("parameter shape mismatch: " + src->name);
    dst.value = src->value.template cast<T>();
  }
}

}  // namespace ecgtext
