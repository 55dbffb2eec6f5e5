#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ecgtext/corpus.hpp"

namespace ecgtext {

using Rng = std::mt19937_64;

struct MaskConfig {
  double lead_mask_prob = 0.5;
  double input_dropout_prob = 0.1;
  double mlm_mask_ratio = 0.15;
  uint64_t seed = 0;

  void validate() const;
};

struct LeadMaskResult {
  EcgSignal signal;
  std::vector<uint8_t> lead_mask;  // 1 = lead zeroed
};

struct DropoutResult {
  EcgSignal signal;
  Matrix<float> element_mask;  // 1 = element zeroed
};

struct MlmMaskResult {
  TokenSequence tokens;
  std::vector<int> positions;  // ascending
  std::vector<int> targets;    // original ids at `positions`
};

enum class Mode { kTrain, kEval };

/// Zeroes each lead independently with probability `prob`.
LeadMaskResult random_lead_mask(const EcgSignal& signal, double prob, Rng& rng);

/// Inverted dropout: zeroes each element with probability `prob` and scales
/// survivors by 1/(1-prob). Identity in eval mode.
DropoutResult input_dropout_mask(const EcgSignal& signal, double prob, Rng& rng, Mode mode = Mode::kTrain);

/// Replaces ceil(ratio * n_valid) distinct valid positions with the MASK id.
MlmMaskResult mlm_mask(const TokenSequence& tokens, double ratio, Rng& rng);

}  // namespace ecgtext
