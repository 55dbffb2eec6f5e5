#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace ecgtext {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

// A named trainable tensor. `grad` is accumulated by Tape::backward.
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool decay = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
class Tape;

// Handle to a node on a Tape. Cheap to copy.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Matrix<T>& value() const { return tape->value(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape over row-major 2-D matrices. Nodes are appended in
// evaluation order, so reverse creation order is a valid topological order.
template <typename T>
class Tape {
 public:
  using Mat = Matrix<T>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Mat value) { return record(std::move(value), false); }

  // A leaf whose gradient is kept on the tape (used to probe input gradients).
  Var<T> input(Mat value) { return record(std::move(value), true); }

  // Each parameter maps to a single node per tape.
  Var<T> param(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<T>{this, it->second};
    Var<T> v = record(p.value, true);
    nodes_[static_cast<size_t>(v.id)].param = &p;
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  Var<T> record(Mat value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  void set_backward(Var<T> v, std::function<void()> fn) { node(v).backward = std::move(fn); }

  const Mat& value(Var<T> v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  bool needs_grad(Var<T> v) const { return nodes_[static_cast<size_t>(v.id)].needs_grad; }

  // Gradient buffer of `v`, zero-initialised on first access.
  Mat& grad(Var<T> v) {
    Node& n = node(v);
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool has_grad(Var<T> v) const { return nodes_[static_cast<size_t>(v.id)].grad.size() != 0; }

  // Seeds d(root)/d(root) = 1 for a 1x1 root, propagates, and accumulates
  // into the `grad` of every parameter reached.
  void backward(Var<T> root);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void()> backward;
    Parameter<T>* param = nullptr;
  };

  Node& node(Var<T> v) { return nodes_[static_cast<size_t>(v.id)]; }

  std::deque<Node> nodes_;
  std::unordered_map<Parameter<T>*, int> param_nodes_;
};

// Geometry of a 1-D convolution over a (length x channels) input.
struct ConvGeometry {
  int kernel = 1;
  int stride = 1;
  int pad_left = 0;
  int out_len = 0;
  int groups = 1;
};

// Elementwise and shape ops. All inputs must live on the same tape.
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> matmul_nt(Var<T> a, Var<T> b);  // a * b^T
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> add_row(Var<T> a, Var<T> row);  // broadcast 1 x n over rows
template <typename T> Var<T> scale(Var<T> a, T s);
template <typename T> Var<T> gelu(Var<T> a);
template <typename T> Var<T> tanh(Var<T> a);

// Row-wise softmax over columns flagged in `key_valid` (empty = all valid).
// Invalid columns receive probability zero.
template <typename T> Var<T> masked_softmax_rows(Var<T> scores, const std::vector<uint8_t>& key_valid);

template <typename T> Var<T> layer_norm(Var<T> a, Var<T> gamma, Var<T> beta, T eps = T(1e-5));
// Normalises each group of consecutive channels over (rows x group channels).
template <typename T> Var<T> group_norm(Var<T> a, int groups, Var<T> gamma, Var<T> beta, T eps = T(1e-5));

// x: (L_in x C_in), weight: (C_out x (C_in/groups)*kernel), bias: (1 x C_out).
template <typename T> Var<T> conv1d(Var<T> x, Var<T> weight, Var<T> bias, const ConvGeometry& geom);

template <typename T> Var<T> mean_rows(Var<T> a);
template <typename T> Var<T> masked_mean_rows(Var<T> a, const std::vector<uint8_t>& valid);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T> Var<T> slice_rows(Var<T> a, Index begin, Index count);
template <typename T> Var<T> slice_cols(Var<T> a, Index begin, Index count);
template <typename T> Var<T> gather_rows(Var<T> table, const std::vector<int>& rows);
template <typename T> Var<T> l2_normalize_rows(Var<T> a);
template <typename T> Var<T> weighted_sum(const std::vector<Var<T>>& scalars, const std::vector<T>& weights);

}  // namespace ecgtext
