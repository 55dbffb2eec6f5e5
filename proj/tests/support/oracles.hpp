#pragma once

// Reference formulas written directly from the loss and metric definitions with
// plain loops. They share no code with the library.

#include <cmath>
#include <cstdint>
#include <vector>

namespace ecgtext::testing {

using Rows = std::vector<std::vector<double>>;

inline double log_sigmoid(double z) {
  // log(1 / (1 + e^-z)), evaluated without overflow for either sign
  return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

// Sum over masked positions of -log softmax(logits[pos])[target].
inline double oracle_token_nll(const Rows& logits, const std::vector<int>& positions, const std::vector<int>& targets) {
  double total = 0.0;
  for (size_t m = 0; m < positions.size(); ++m) {
    const auto& row = logits[static_cast<size_t>(positions[m])];
    double mx = row[0];
    for (double v : row) mx = v > mx ? v : mx;
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += -(row[static_cast<size_t>(targets[m])] - mx - std::log(z));
  }
  return total;
}

// (1/B) sum_i sum_{l,c} (x_hat - x)^2
inline double oracle_mem(const std::vector<Rows>& x_hat, const std::vector<Rows>& x) {
  double total = 0.0;
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t l = 0; l < x[i].size(); ++l)
      for (size_t c = 0; c < x[i][l].size(); ++c) {
        const double d = x_hat[i][l][c] - x[i][l][c];
        total += d * d;
      }
  return total / static_cast<double>(x.size());
}

// Mean over the batch of -(y log s(z) + (1 - y) log(1 - s(z))).
inline double oracle_etm(const std::vector<double>& z, const std::vector<int>& y) {
  double total = 0.0;
  for (size_t k = 0; k < z.size(); ++k) total += -(y[k] * log_sigmoid(z[k]) + (1 - y[k]) * log_sigmoid(-z[k]));
  return total / static_cast<double>(z.size());
}

// -(1/B) sum_{i,j} log s(y_ij x_i . t_j)
inline double oracle_ets(const Rows& x, const Rows& t, const Rows& y) {
  double total = 0.0;
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t j = 0; j < t.size(); ++j) {
      double dot = 0.0;
      for (size_t d = 0; d < x[i].size(); ++d) dot += x[i][d] * t[j][d];
      total += -log_sigmoid(y[i][j] * dot);
    }
  return total / static_cast<double>(x.size());
}

// Fraction of (positive, negative) pairs ranked correctly, ties counting one half.
inline double oracle_auc(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
  double hits = 0.0;
  double pairs = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) hits += 1.0;
      else if (scores[i] == scores[j]) hits += 0.5;
    }
  }
  return hits / pairs;
}

}  // namespace ecgtext::testing
