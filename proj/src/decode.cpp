#include "switchcap/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace switchcap {

namespace {

/// Ordering used both for beam pruning and for picking the returned
/// hypothesis: higher score, then earlier completion, then token ids.
bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

DecodedCaption to_caption(const Hypothesis& hyp, const Vocabulary& vocab, bool reached_eos) {
  DecodedCaption cap;
  cap.token_ids = hyp.tokens;
  cap.log_prob = hyp.log_prob;
  cap.gamma_trace = hyp.gamma_trace;
  cap.reached_eos = reached_eos;
  cap.tokens.reserve(hyp.tokens.size());
  for (int id : hyp.tokens) cap.tokens.push_back(vocab.token(id));
  return cap;
}

void check_inputs(const SwitchingModel& model, const Vocabulary& vocab, const Vec& feature) {
  const ModelDims dims = model.dims();
  if (feature.size() != dims.feature) {
    throw std::invalid_argument("decode: feature length " + std::to_string(feature.size()) +
                                " disagrees with model D_x " + std::to_string(dims.feature));
  }
  if (static_cast<std::size_t>(vocab.size()) != dims.vocab) {
    throw std::invalid_argument("decode: vocabulary size disagrees with model V");
  }
}

}  // namespace

DecodedCaption beam_search(const SwitchingModel& model, const Vocabulary& vocab,
                           const Vec& feature, std::size_t beam_width, std::size_t max_len) {
  check_inputs(model, vocab, feature);
  if (beam_width < 1) throw std::invalid_argument("beam_search: beam_width must be >= 1");
  if (max_len < 1) throw std::invalid_argument("beam_search: max_len must be >= 1");
  const ModelDims dims = model.dims();

  std::vector<Hypothesis> live(1);
  live[0].state0 = zero_state(dims.hidden);
  live[0].state1 = zero_state(dims.hidden);
  std::vector<Hypothesis> finalized;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Hypothesis> candidates;
    candidates.reserve(live.size() * dims.vocab);
    for (const Hypothesis& hyp : live) {
      Vec in0, in1;
      if (hyp.tokens.empty()) {
        in0 = embed_first(model.stream0, feature);
        in1 = embed_first(model.stream1, feature);
      } else {
        in0 = embed_token(model.stream0, hyp.tokens.back());
        in1 = embed_token(model.stream1, hyp.tokens.back());
      }
      const StepOutput out = forward_step(model, hyp.state0, hyp.state1, in0, in1);
      for (std::size_t v = 0; v < dims.vocab; ++v) {
        Hypothesis cand;
        cand.tokens = hyp.tokens;
        cand.tokens.push_back(static_cast<int>(v));
        cand.log_prob = hyp.log_prob + std::log(out.dist[v]);
        cand.state0 = out.state0;
        cand.state1 = out.state1;
        cand.gamma_trace = hyp.gamma_trace;
        cand.gamma_trace.push_back(out.gamma1);
        candidates.push_back(std::move(cand));
      }
    }
    const std::size_t keep = std::min(beam_width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(), better);
    std::vector<Hypothesis> next_live;
    for (std::size_t k = 0; k < keep; ++k) {
      if (candidates[k].tokens.back() == Vocabulary::kEos) {
        finalized.push_back(std::move(candidates[k]));
      } else {
        next_live.push_back(std::move(candidates[k]));
      }
    }
    live = std::move(next_live);
  }

  // Finalized hypotheses compete with the surviving live ones by raw score.
  std::vector<Hypothesis> pool = std::move(finalized);
  pool.insert(pool.end(), live.begin(), live.end());
  const auto best = std::min_element(pool.begin(), pool.end(), better);
  return to_caption(*best, vocab, best->tokens.back() == Vocabulary::kEos);
}

DecodedCaption greedy_decode(const SwitchingModel& model, const Vocabulary& vocab,
                             const Vec& feature, std::size_t max_len) {
  check_inputs(model, vocab, feature);
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  const ModelDims dims = model.dims();

  Hypothesis hyp;
  hyp.state0 = zero_state(dims.hidden);
  hyp.state1 = zero_state(dims.hidden);
  bool reached_eos = false;
  for (std::size_t step = 0; step < max_len; ++step) {
    Vec in0, in1;
    if (hyp.tokens.empty()) {
      in0 = embed_first(model.stream0, feature);
      in1 = embed_first(model.stream1, feature);
    } else {
      in0 = embed_token(model.stream0, hyp.tokens.back());
      in1 = embed_token(model.stream1, hyp.tokens.back());
    }
    const StepOutput out = forward_step(model, hyp.state0, hyp.state1, in0, in1);
    std::size_t best = 0;
    for (std::size_t v = 1; v < dims.vocab; ++v) {
      if (out.dist[v] > out.dist[best]) best = v;
    }
    hyp.tokens.push_back(static_cast<int>(best));
    hyp.log_prob += std::log(out.dist[best]);
    hyp.gamma_trace.push_back(out.gamma1);
    hyp.state0 = out.state0;
    hyp.state1 = out.state1;
    if (static_cast<int>(best) == Vocabulary::kEos) {
      reached_eos = true;
      break;
    }
  }
  return to_caption(hyp, vocab, reached_eos);
}

}  // namespace switchcap
