#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "switchcap/data.hpp"
#include "switchcap/tensor.hpp"

namespace switchcap {

struct ModelDims {
  std::size_t hidden = 0;   // D
  std::size_t vocab = 0;    // V
  std::size_t feature = 0;  // D_x

  bool operator==(const ModelDims&) const = default;
};

/// One RNN stream's parameters.
struct StreamParams {
  Matrix T;   // 4D x 2D gate weights
  Matrix E;   // D x V word embedding
  Matrix Wx;  // D x D_x image embedding
  Matrix Wy;  // V x D output weights

  ModelDims dims() const;

  static StreamParams zeros(const ModelDims& d);
  static StreamParams random_init(const ModelDims& d, Rng& rng, double scale = 0.08);
};

/// Two streams plus the switch weights: the full generative model.
/// Stream 0 is the background language model, stream 1 the sentiment one.
struct SwitchingModel {
  StreamParams stream0;
  StreamParams stream1;
  Matrix Ws;  // 1 x 2D switch weights
  Polarity polarity = Polarity::positive;

  /// The printed recurrence emits h = o .* c; the conventional variant
  /// applies tanh to the cell first. Off by default.
  bool cell_output_tanh = false;

  ModelDims dims() const;
};

struct LSTMState {
  Vec h;
  Vec c;
};

LSTMState zero_state(std::size_t hidden);

/// Per-step forward result: the marginal word distribution, the gate value,
/// and everything needed to keep stepping.
struct StepOutput {
  Vec dist;  // marginal over V
  double gamma1 = 0.0;
  Vec dist0;
  Vec dist1;
  LSTMState state0;
  LSTMState state1;
};

/// Image embedding used as the step-1 input: Wx * feature.
Vec embed_first(const StreamParams& stream, const Vec& feature);

/// Column of E for a token id; the step-t input for t > 1.
Vec embed_token(const StreamParams& stream, int token);

LSTMState lstm_step(const StreamParams& stream, const LSTMState& prev, const Vec& input,
                    bool cell_output_tanh = false);

/// softmax(Wy * h).
Vec stream_dist(const StreamParams& stream, const LSTMState& state);

/// gamma^1 = sigma(Ws * [h0; h1]); gamma^0 is its complement.
double switch_prob(const SwitchingModel& model, const LSTMState& state0,
                   const LSTMState& state1);

/// Advances both streams on their per-stream inputs and mixes the two word
/// distributions with the gate computed from the new hidden states.
StepOutput forward_step(const SwitchingModel& model, const LSTMState& state0,
                        const LSTMState& state1, const Vec& input0, const Vec& input1);

struct ScoredStep {
  StepOutput out;
  double log_prob = 0.0;  // log of the marginal probability of the gold token
};

/// Teacher-forced pass over a full example; step 1 is seeded with the image
/// embedding of each stream, both streams start from zero states.
std::vector<ScoredStep> sequence_forward(const SwitchingModel& model,
                                         const CaptionExample& example);

/// Switching model whose sentiment stream starts as a copy of the
/// background stream; switch weights drawn small and seeded.
SwitchingModel make_switching_model(const StreamParams& background, std::uint64_t seed,
                                    Polarity polarity);

// --- checkpoint mapping -----------------------------------------------------

inline constexpr const char* kKindBackground = "background";
inline constexpr const char* kKindSwitching = "switching";

Checkpoint background_to_checkpoint(const StreamParams& stream, const Vocabulary& vocab,
                                    const nlohmann::json& config_echo);
Checkpoint switching_to_checkpoint(const SwitchingModel& model, const Vocabulary& vocab,
                                   const nlohmann::json& config_echo);

struct LoadedBackground {
  StreamParams stream;
  Vocabulary vocab;
};
struct LoadedSwitching {
  SwitchingModel model;
  Vocabulary vocab;
};

LoadedBackground background_from_checkpoint(const Checkpoint& ckpt);
LoadedSwitching switching_from_checkpoint(const Checkpoint& ckpt);

/// Reads either kind; a background checkpoint is promoted to a switching
/// model with both streams equal and zero switch weights, which mixes to
/// exactly the background distribution.
LoadedSwitching switching_from_checkpoint_any(const Checkpoint& ckpt);

}  // namespace switchcap
