#include "ecgtext/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecgtext {

namespace {

void check_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
}

}  // namespace

void MaskConfig::validate() const {
  check_prob(lead_mask_prob, "lead_mask_prob");
  check_prob(input_dropout_prob, "input_dropout_prob");
  check_prob(mlm_mask_ratio, "mlm_mask_ratio");
  if (input_dropout_prob >= 1.0) throw std::invalid_argument("degenerate dropout");
}

LeadMaskResult random_lead_mask(const EcgSignal& signal, double prob, Rng& rng) {
  check_prob(prob, "lead mask probability");
  LeadMaskResult out{signal, std::vector<uint8_t>(static_cast<size_t>(signal.leads()), 0)};
  std::bernoulli_distribution coin(prob);
  for (Index c = 0; c < signal.leads(); ++c) {
    if (!coin(rng)) continue;
    out.lead_mask[static_cast<size_t>(c)] = 1;
    out.signal.samples.col(c).setZero();
  }
  return out;
}

DropoutResult input_dropout_mask(const EcgSignal& signal, double prob, Rng& rng, Mode mode) {
  check_prob(prob, "dropout probability");
  if (prob >= 1.0) throw std::invalid_argument("degenerate dropout");
  DropoutResult out{signal, Matrix<float>::Zero(signal.length(), signal.leads())};
  if (mode == Mode::kEval || prob == 0.0) return out;
  std::bernoulli_distribution drop(prob);
  const auto keep_scale = static_cast<float>(1.0 / (1.0 - prob));
  auto& x = out.signal.samples;
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) {
      if (drop(rng)) {
        x(r, c) = 0.0f;
        out.element_mask(r, c) = 1.0f;
      } else {
        x(r, c) *= keep_scale;
      }
    }
  }
  return out;
}

MlmMaskResult mlm_mask(const TokenSequence& tokens, double ratio, Rng& rng) {
  check_prob(ratio, "mlm mask ratio");
  std::vector<int> valid;
  for (size_t i = 0; i < tokens.ids.size(); ++i)
    if (tokens.mask[i] && tokens.ids[i] != Vocabulary::kPad) valid.push_back(static_cast<int>(i));
  if (valid.empty()) throw std::invalid_argument("nothing to mask");

  MlmMaskResult out{tokens, {}, {}};
  if (ratio == 0.0) return out;
  auto n = static_cast<size_t>(std::ceil(ratio * static_cast<double>(valid.size()) - 1e-12));
  n = std::clamp<size_t>(n, 1, valid.size());
  // partial Fisher-Yates: the first n entries become a uniform sample
  for (size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<size_t> pick(i, valid.size() - 1);
    std::swap(valid[i], valid[pick(rng)]);
  }
  out.positions.assign(valid.begin(), valid.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(out.positions.begin(), out.positions.end());
  for (int p : out.positions) {
    out.targets.push_back(tokens.ids[static_cast<size_t>(p)]);
    out.tokens.ids[static_cast<size_t>(p)] = Vocabulary::kMask;
  }
  return out;
}

}  // namespace ecgtext
