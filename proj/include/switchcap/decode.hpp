#pragma once

#include <string>
#include <vector>

#include "switchcap/model.hpp"

namespace switchcap {

/// A live or finalized beam entry.
struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  LSTMState state0;
  LSTMState state1;
  std::vector<double> gamma_trace;  // gamma^1 per emitted token
};

struct DecodedCaption {
  std::vector<std::string> tokens;  // includes the final EOS when one was reached
  std::vector<int> token_ids;
  double log_prob = 0.0;
  std::vector<double> gamma_trace;  // aligned with tokens
  bool reached_eos = false;
};

inline constexpr std::size_t kDefaultBeamWidth = 5;
inline constexpr std::size_t kDefaultMaxLen = 20;

/// Beam search over the marginal word distribution. Hypotheses reaching EOS
/// are finalized; the best finalized hypothesis wins, otherwise the best
/// live one at max_len. Scores are raw log-probabilities (no length
/// normalization); ties break by earlier completion, then by token ids.
DecodedCaption beam_search(const SwitchingModel& model, const Vocabulary& vocab,
                           const Vec& feature, std::size_t beam_width = kDefaultBeamWidth,
                           std::size_t max_len = kDefaultMaxLen);

/// Argmax decoding; ties break toward the lowest token id.
DecodedCaption greedy_decode(const SwitchingModel& model, const Vocabulary& vocab,
                             const Vec& feature, std::size_t max_len = kDefaultMaxLen);

}  // namespace switchcap
