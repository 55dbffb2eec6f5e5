#include "ecgtext/autograd.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ecgtext {

template <typename T>
void Tape<T>::backward(Var<T> root) {
  if (value(root).size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  grad(root).setOnes();
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward();
    if (n.param != nullptr) {
      Parameter<T>& p = *n.param;
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
      p.grad += n.grad;
    }
  }
}

namespace {

template <typename T>
Tape<T>& same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape || a.tape == nullptr) throw std::invalid_argument("vars live on different tapes");
  return *a.tape;
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& t = same_tape(a, b);
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix<T> v = a.value() * b.value();
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, a, b, out] {
      const Matrix<T>& g = t.grad(out);
      if (t.needs_grad(a)) t.grad(a).noalias() += g * t.value(b).transpose();
      if (t.needs_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
    });
  }
  return out;
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  Tape<T>& t = same_tape(a, b);
  require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  Matrix<T> v = a.value() * b.value().transpose();
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, a, b, out] {
      const Matrix<T>& g = t.grad(out);
      if (t.needs_grad(a)) t.grad(a).noalias() += g * t.value(b);
      if (t.needs_grad(b)) t.grad(b).noalias() += g.transpose() * t.value(a);
    });
  }
  return out;
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& t = same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Matrix<T> v = a.value() + b.value();
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, a, b, out] {
      const Matrix<T>& g = t.grad(out);
      if (t.needs_grad(a)) t.grad(a) += g;
      if (t.needs_grad(b)) t.grad(b) += g;
    });
  }
  return out;
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  Tape<T>& t = same_tape(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: row shape mismatch");
  Matrix<T> v = a.value();
  v.rowwise() += row.value().row(0);
  const bool ng = t.needs_grad(a) || t.needs_grad(row);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, a, row, out] {
      const Matrix<T>& g = t.grad(out);
      if (t.needs_grad(a)) t.grad(a) += g;
      if (t.needs_grad(row)) t.grad(row) += g.colwise().sum();
    });
  }
  return out;
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tape<T>& t = *a.tape;
  Matrix<T> v = a.value() * s;
  const bool ng = t.needs_grad(a);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, a, out, s] { t.grad(a) += t.grad(out) * s; });
  }
  return out;
}

template <typename T>
Var<T> gelu(Var<T> a) {
  Tape<T>& t = *a.tape;
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  Matrix<T> v = a.value().unaryExpr([inv_sqrt2](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); });
  const bool ng = t.needs_grad(a);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, a, out, inv_sqrt2] {
      const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
      const Matrix<T> d = t.value(a).unaryExpr([&](T x) {
        return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
      });
      t.grad(a) += t.grad(out).cwiseProduct(d);
    });
  }
  return out;
}

template <typename T>
Var<T> tanh(Var<T> a) {
  Tape<T>& t = *a.tape;
  Matrix<T> v = a.value().array().tanh().matrix();
  const bool ng = t.needs_grad(a);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, a, out] {
      const Matrix<T>& y = t.value(out);
      t.grad(a) += t.grad(out).cwiseProduct((T(1) - y.array().square()).matrix());
    });
  }
  return out;
}

template <typename T>
Var<T> masked_softmax_rows(Var<T> scores, const std::vector<uint8_t>& key_valid) {
  Tape<T>& t = *scores.tape;
  const Matrix<T>& s = scores.value();
  require(key_valid.empty() || static_cast<Index>(key_valid.size()) == s.cols(), "softmax: mask length mismatch");
  auto valid = [&key_valid](Index c) { return key_valid.empty() || key_valid[static_cast<size_t>(c)] != 0; };
  Matrix<T> p = Matrix<T>::Zero(s.rows(), s.cols());
  for (Index r = 0; r < s.rows(); ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (Index c = 0; c < s.cols(); ++c)
      if (valid(c)) mx = std::max(mx, s(r, c));
    if (!std::isfinite(mx)) throw std::invalid_argument("softmax: no valid keys");
    T sum = 0;
    for (Index c = 0; c < s.cols(); ++c) {
      if (!valid(c)) continue;
      p(r, c) = std::exp(s(r, c) - mx);
      sum += p(r, c);
    }
    p.row(r) /= sum;
  }
  const bool ng = t.needs_grad(scores);
  Var<T> out = t.record(std::move(p), ng);
  if (ng) {
    t.set_backward(out, [&t, scores, out] {
      const Matrix<T>& y = t.value(out);
      const Matrix<T>& g = t.grad(out);
      const Matrix<T> gy = g.cwiseProduct(y);
      const auto dot = gy.rowwise().sum();
      Matrix<T> ds = gy - (y.array().colwise() * dot.array()).matrix();
      t.grad(scores) += ds;
    });
  }
  return out;
}

template <typename T>
Var<T> layer_norm(Var<T> a, Var<T> gamma, Var<T> beta, T eps) {
  Tape<T>& t = same_tape(a, gamma);
  const Matrix<T>& x = a.value();
  const Index n = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == n && beta.rows() == 1 && beta.cols() == n, "layer_norm: affine shape");
  Matrix<T> xhat(x.rows(), n);
  std::vector<T> inv_std(static_cast<size_t>(x.rows()));
  for (Index r = 0; r < x.rows(); ++r) {
    const T mu = x.row(r).mean();
    const T var = (x.row(r).array() - mu).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = is;
    xhat.row(r) = (x.row(r).array() - mu) * is;
  }
  Matrix<T> y = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  y.rowwise() += beta.value().row(0);
  const bool ng = t.needs_grad(a) || t.needs_grad(gamma) || t.needs_grad(beta);
  Var<T> out = t.record(std::move(y), ng);
  if (ng) {
    t.set_backward(out, [&t, a, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      const Matrix<T>& g = t.grad(out);
      if (t.needs_grad(gamma)) t.grad(gamma) += g.cwiseProduct(xhat).colwise().sum();
      if (t.needs_grad(beta)) t.grad(beta) += g.colwise().sum();
      if (t.needs_grad(a)) {
        const Matrix<T> dxhat = (g.array().rowwise() * t.value(gamma).row(0).array()).matrix();
        Matrix<T>& ga = t.grad(a);
        for (Index r = 0; r < g.rows(); ++r) {
          const T m1 = dxhat.row(r).mean();
          const T m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
          ga.row(r).array() +=
              inv_std[static_cast<size_t>(r)] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> group_norm(Var<T> a, int groups, Var<T> gamma, Var<T> beta, T eps) {
  Tape<T>& t = same_tape(a, gamma);
  const Matrix<T>& x = a.value();
  const Index c = x.cols();
  require(groups >= 1 && c % groups == 0, "group_norm: channels not divisible by groups");
  require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 && beta.cols() == c, "group_norm: affine shape");
  const Index width = c / groups;
  Matrix<T> xhat(x.rows(), c);
  std::vector<T> inv_std(static_cast<size_t>(groups));
  for (int gi = 0; gi < groups; ++gi) {
    const auto block = x.middleCols(gi * width, width);
    const T mu = block.mean();
    const T var = (block.array() - mu).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(gi)] = is;
    xhat.middleCols(gi * width, width) = ((block.array() - mu) * is).matrix();
  }
  Matrix<T> y = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  y.rowwise() += beta.value().row(0);
  const bool ng = t.needs_grad(a) || t.needs_grad(gamma) || t.needs_grad(beta);
  Var<T> out = t.record(std::move(y), ng);
  if (ng) {
    t.set_backward(out, [&t, a, gamma, beta, out, groups, width, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)] {
      const Matrix<T>& g = t.grad(out);
      if (t.needs_grad(gamma)) t.grad(gamma) += g.cwiseProduct(xhat).colwise().sum();
      if (t.needs_grad(beta)) t.grad(beta) += g.colwise().sum();
      if (t.needs_grad(a)) {
        const Matrix<T> dxhat = (g.array().rowwise() * t.value(gamma).row(0).array()).matrix();
        Matrix<T>& ga = t.grad(a);
        for (int gi = 0; gi < groups; ++gi) {
          const auto d = dxhat.middleCols(gi * width, width);
          const auto xh = xhat.middleCols(gi * width, width);
          const T m1 = d.mean();
          const T m2 = d.cwiseProduct(xh).mean();
          ga.middleCols(gi * width, width).array() +=
              inv_std[static_cast<size_t>(gi)] * (d.array() - m1 - xh.array() * m2);
        }
      }
    });
  }
  return out;
}

namespace {

template <typename T>
Matrix<T> im2col(const Matrix<T>& x, Index c0, Index cin_g, const ConvGeometry& g) {
  Matrix<T> cols = Matrix<T>::Zero(g.out_len, cin_g * g.kernel);
  for (Index o = 0; o < g.out_len; ++o) {
    for (int k = 0; k < g.kernel; ++k) {
      const Index src = o * g.stride + k - g.pad_left;
      if (src < 0 || src >= x.rows()) continue;
      for (Index ci = 0; ci < cin_g; ++ci) cols(o, ci * g.kernel + k) = x(src, c0 + ci);
    }
  }
  return cols;
}

}  // namespace

template <typename T>
Var<T> conv1d(Var<T> x, Var<T> weight, Var<T> bias, const ConvGeometry& geom) {
  Tape<T>& t = same_tape(x, weight);
  const Matrix<T>& xv = x.value();
  const Matrix<T>& w = weight.value();
  const Index cin = xv.cols();
  const Index cout = w.rows();
  require(geom.groups >= 1 && cin % geom.groups == 0 && cout % geom.groups == 0, "conv1d: bad groups");
  const Index cin_g = cin / geom.groups;
  const Index cout_g = cout / geom.groups;
  require(w.cols() == cin_g * geom.kernel, "conv1d: weight shape");
  require(bias.rows() == 1 && bias.cols() == cout, "conv1d: bias shape");
  require(geom.out_len >= 1, "conv1d: empty output");

  Matrix<T> y(geom.out_len, cout);
  for (int gi = 0; gi < geom.groups; ++gi) {
    const Matrix<T> cols = im2col(xv, gi * cin_g, cin_g, geom);
    y.middleCols(gi * cout_g, cout_g).noalias() = cols * w.middleRows(gi * cout_g, cout_g).transpose();
  }
  y.rowwise() += bias.value().row(0);

  const bool ng = t.needs_grad(x) || t.needs_grad(weight) || t.needs_grad(bias);
  Var<T> out = t.record(std::move(y), ng);
  if (ng) {
    t.set_backward(out, [&t, x, weight, bias, out, geom, cin_g, cout_g] {
      const Matrix<T>& g = t.grad(out);
      const Matrix<T>& xv = t.value(x);
      const Matrix<T>& w = t.value(weight);
      if (t.needs_grad(bias)) t.grad(bias) += g.colwise().sum();
      for (int gi = 0; gi < geom.groups; ++gi) {
        const auto gg = g.middleCols(gi * cout_g, cout_g);
        if (t.needs_grad(weight)) {
          const Matrix<T> cols = im2col(xv, gi * cin_g, cin_g, geom);
          t.grad(weight).middleRows(gi * cout_g, cout_g).noalias() += gg.transpose() * cols;
        }
        if (t.needs_grad(x)) {
          const Matrix<T> dcols = gg * w.middleRows(gi * cout_g, cout_g);
          Matrix<T>& gx = t.grad(x);
          for (Index o = 0; o < geom.out_len; ++o) {
            for (int k = 0; k < geom.kernel; ++k) {
              const Index src = o * geom.stride + k - geom.pad_left;
              if (src < 0 || src >= xv.rows()) continue;
              for (Index ci = 0; ci < cin_g; ++ci) gx(src, gi * cin_g + ci) += dcols(o, ci * geom.kernel + k);
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> mean_rows(Var<T> a) {
  Tape<T>& t = *a.tape;
  require(a.rows() >= 1, "mean_rows: empty input");
  Matrix<T> v = a.value().colwise().mean();
  const bool ng = t.needs_grad(a);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, a, out] {
      const T inv = T(1) / static_cast<T>(t.value(a).rows());
      t.grad(a).rowwise() += t.grad(out).row(0) * inv;
    });
  }
  return out;
}

template <typename T>
Var<T> masked_mean_rows(Var<T> a, const std::vector<uint8_t>& valid) {
  Tape<T>& t = *a.tape;
  require(static_cast<Index>(valid.size()) == a.rows(), "masked_mean_rows: mask length mismatch");
  Index count = 0;
  Matrix<T> v = Matrix<T>::Zero(1, a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    if (!valid[static_cast<size_t>(r)]) continue;
    v += a.value().row(r);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("empty pooling");
  v /= static_cast<T>(count);
  const bool ng = t.needs_grad(a);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, a, out, valid, count] {
      const T inv = T(1) / static_cast<T>(count);
      Matrix<T>& ga = t.grad(a);
      for (Index r = 0; r < ga.rows(); ++r)
        if (valid[static_cast<size_t>(r)]) ga.row(r) += t.grad(out).row(0) * inv;
    });
  }
  return out;
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Tape<T>& t = *parts.front().tape;
  Index rows = 0;
  bool ng = false;
  for (const auto& p : parts) {
    require(p.tape == &t && p.cols() == parts.front().cols(), "concat_rows: column mismatch");
    rows += p.rows();
    ng = ng || t.needs_grad(p);
  }
  Matrix<T> v(rows, parts.front().cols());
  Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, parts, out] {
      Index r = 0;
      for (const auto& p : parts) {
        const Index n = t.value(p).rows();
        if (t.needs_grad(p)) t.grad(p) += t.grad(out).middleRows(r, n);
        r += n;
      }
    });
  }
  return out;
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape<T>& t = *parts.front().tape;
  Index cols = 0;
  bool ng = false;
  for (const auto& p : parts) {
    require(p.tape == &t && p.rows() == parts.front().rows(), "concat_cols: row mismatch");
    cols += p.cols();
    ng = ng || t.needs_grad(p);
  }
  Matrix<T> v(parts.front().rows(), cols);
  Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, parts, out] {
      Index c = 0;
      for (const auto& p : parts) {
        const Index n = t.value(p).cols();
        if (t.needs_grad(p)) t.grad(p) += t.grad(out).middleCols(c, n);
        c += n;
      }
    });
  }
  return out;
}

template <typename T>
Var<T> slice_rows(Var<T> a, Index begin, Index count) {
  Tape<T>& t = *a.tape;
  require(begin >= 0 && count >= 0 && begin + count <= a.rows(), "slice_rows: out of range");
  Matrix<T> v = a.value().middleRows(begin, count);
  const bool ng = t.needs_grad(a);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, a, out, begin, count] { t.grad(a).middleRows(begin, count) += t.grad(out); });
  }
  return out;
}

template <typename T>
Var<T> slice_cols(Var<T> a, Index begin, Index count) {
  Tape<T>& t = *a.tape;
  require(begin >= 0 && count >= 0 && begin + count <= a.cols(), "slice_cols: out of range");
  Matrix<T> v = a.value().middleCols(begin, count);
  const bool ng = t.needs_grad(a);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, a, out, begin, count] { t.grad(a).middleCols(begin, count) += t.grad(out); });
  }
  return out;
}

template <typename T>
Var<T> gather_rows(Var<T> table, const std::vector<int>& rows) {
  Tape<T>& t = *table.tape;
  const Matrix<T>& tv = table.value();
  Matrix<T> v(static_cast<Index>(rows.size()), tv.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < tv.rows(), "gather_rows: index out of range");
    v.row(static_cast<Index>(i)) = tv.row(rows[i]);
  }
  const bool ng = t.needs_grad(table);
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, table, out, rows] {
      Matrix<T>& gt = t.grad(table);
      const Matrix<T>& g = t.grad(out);
      for (size_t i = 0; i < rows.size(); ++i) gt.row(rows[i]) += g.row(static_cast<Index>(i));
    });
  }
  return out;
}

template <typename T>
Var<T> l2_normalize_rows(Var<T> a) {
  Tape<T>& t = *a.tape;
  const Matrix<T>& x = a.value();
  std::vector<T> norms(static_cast<size_t>(x.rows()));
  Matrix<T> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const T n = x.row(r).norm();
    if (!(n > T(0))) throw std::invalid_argument("l2_normalize_rows: zero row");
    norms[static_cast<size_t>(r)] = n;
    y.row(r) = x.row(r) / n;
  }
  const bool ng = t.needs_grad(a);
  Var<T> out = t.record(std::move(y), ng);
  if (ng) {
    t.set_backward(out, [&t, a, out, norms = std::move(norms)] {
      const Matrix<T>& y = t.value(out);
      const Matrix<T>& g = t.grad(out);
      Matrix<T>& ga = t.grad(a);
      for (Index r = 0; r < y.rows(); ++r) {
        const T d = y.row(r).dot(g.row(r));
        ga.row(r) += (g.row(r) - y.row(r) * d) / norms[static_cast<size_t>(r)];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& scalars, const std::vector<T>& weights) {
  require(!scalars.empty() && scalars.size() == weights.size(), "weighted_sum: size mismatch");
  Tape<T>& t = *scalars.front().tape;
  T total = 0;
  bool ng = false;
  for (size_t i = 0; i < scalars.size(); ++i) {
    require(scalars[i].value().size() == 1, "weighted_sum: inputs must be scalars");
    total += weights[i] * scalars[i].value()(0, 0);
    ng = ng || t.needs_grad(scalars[i]);
  }
  Matrix<T> v(1, 1);
  v(0, 0) = total;
  Var<T> out = t.record(std::move(v), ng);
  if (ng) {
    t.set_backward(out, [&t, scalars, weights, out] {
      const T g = t.grad(out)(0, 0);
      for (size_t i = 0; i < scalars.size(); ++i)
        if (t.needs_grad(scalars[i])) t.grad(scalars[i])(0, 0) += g * weights[i];
    });
  }
  return out;
}

#define ECGTEXT_INSTANTIATE_OPS(T)                                                               \
  template class Tape<T>;                                                                        \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                     \
  template Var<T> matmul_nt<T>(Var<T>, Var<T>);                                                  \
  template Var<T> add<T>(Var<T>, Var<T>);                                                        \
  template Var<T> add_row<T>(Var<T>, Var<T>);                                                    \
  template Var<T> scale<T>(Var<T>, T);                                                           \
  template Var<T> gelu<T>(Var<T>);                                                               \
  template Var<T> tanh<T>(Var<T>);                                                               \
  template Var<T> masked_softmax_rows<T>(Var<T>, const std::vector<uint8_t>&);                   \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                      \
  template Var<T> group_norm<T>(Var<T>, int, Var<T>, Var<T>, T);                                 \
  template Var<T> conv1d<T>(Var<T>, Var<T>, Var<T>, const ConvGeometry&);                        \
  template Var<T> mean_rows<T>(Var<T>);                                                          \
  template Var<T> masked_mean_rows<T>(Var<T>, const std::vector<uint8_t>&);                      \
  template Var<T> concat_rows<T>(const std::vector<Var<T>>&);                                    \
  template Var<T> concat_cols<T>(const std::vector<Var<T>>&);                                    \
  template Var<T> slice_rows<T>(Var<T>, Index, Index);                                           \
  template Var<T> slice_cols<T>(Var<T>, Index, Index);                                           \
  template Var<T> gather_rows<T>(Var<T>, const std::vector<int>&);                               \
  template Var<T> l2_normalize_rows<T>(Var<T>);                                                  \
  template Var<T> weighted_sum<T>(const std::vector<Var<T>>&, const std::vector<T>&);

ECGTEXT_INSTANTIATE_OPS(float)
ECGTEXT_INSTANTIATE_OPS(double)

#undef ECGTEXT_INSTANTIATE_OPS

}  // namespace ecgtext
