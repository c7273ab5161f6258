#include "switchcap/model.hpp"

#include <cmath>
#include <stdexcept>

namespace switchcap {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vocabulary vocab_from_metadata(const nlohmann::json& meta) {
  auto words = meta.at("vocab").get<std::vector<std::string>>();
  // Stored list includes the reserved tokens at the front.
  if (words.size() < 4) {
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "checkpoint vocabulary too small");
  }
  return Vocabulary(std::vector<std::string>(words.begin() + 3, words.end()));
}

void check_dims_against_metadata(const nlohmann::json& meta, const ModelDims& dims) {
  const auto d = meta.at("D").get<std::size_t>();
  const auto v = meta.at("V").get<std::size_t>();
  const auto dx = meta.at("D_x").get<std::size_t>();
  if (d != dims.hidden || v != dims.vocab || dx != dims.feature) {
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "checkpoint metadata dimensions disagree with tensor shapes");
  }
}

StreamParams stream_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix) {
  StreamParams s;
  s.T = ckpt.tensor(prefix + ".T");
  s.E = ckpt.tensor(prefix + ".E");
  s.Wx = ckpt.tensor(prefix + ".Wx");
  s.Wy = ckpt.tensor(prefix + ".Wy");
  try {
    s.dims();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointError::Kind::inconsistent, e.what());
  }
  return s;
}

void append_stream_tensors(Checkpoint& ckpt, const StreamParams& s,
                           const std::string& prefix) {
  ckpt.tensors.push_back({prefix + ".T", s.T});
  ckpt.tensors.push_back({prefix + ".E", s.E});
  ckpt.tensors.push_back({prefix + ".Wx", s.Wx});
  ckpt.tensors.push_back({prefix + ".Wy", s.Wy});
}

nlohmann::json base_metadata(const char* kind, const ModelDims& dims,
                             const Vocabulary& vocab, const nlohmann::json& config_echo) {
  nlohmann::json meta;
  meta["kind"] = kind;
  meta["D"] = dims.hidden;
  meta["V"] = dims.vocab;
  meta["D_x"] = dims.feature;
  meta["vocab"] = vocab.tokens();
  meta["config"] = config_echo;
  return meta;
}

}  // namespace

ModelDims StreamParams::dims() const {
  ModelDims d;
  d.hidden = E.rows;
  d.vocab = E.cols;
  d.feature = Wx.cols;
  require(T.rows == 4 * d.hidden && T.cols == 2 * d.hidden,
          "stream T must be 4D x 2D to match the embedding");
  require(Wx.rows == d.hidden, "stream Wx must have D rows");
  require(Wy.rows == d.vocab && Wy.cols == d.hidden, "stream Wy must be V x D");
  return d;
}

StreamParams StreamParams::zeros(const ModelDims& d) {
  StreamParams s;
  s.T = Matrix(4 * d.hidden, 2 * d.hidden);
  s.E = Matrix(d.hidden, d.vocab);
  s.Wx = Matrix(d.hidden, d.feature);
  s.Wy = Matrix(d.vocab, d.hidden);
  return s;
}

StreamParams StreamParams::random_init(const ModelDims& d, Rng& rng, double scale) {
  StreamParams s = zeros(d);
  for (Matrix* m : {&s.T, &s.E, &s.Wx, &s.Wy}) {
    for (double& x : m->data) x = rng.uniform(-scale, scale);
  }
  return s;
}

ModelDims SwitchingModel::dims() const {
  const ModelDims d0 = stream0.dims();
  const ModelDims d1 = stream1.dims();
  require(d0 == d1, "both streams must share (D, V, D_x)");
  require(Ws.rows == 1 && Ws.cols == 2 * d0.hidden, "Ws must be 1 x 2D");
  return d0;
}

LSTMState zero_state(std::size_t hidden) { return {Vec(hidden, 0.0), Vec(hidden, 0.0)}; }

Vec embed_first(const StreamParams& stream, const Vec& feature) {
  return matvec(stream.Wx, feature);
}

Vec embed_token(const StreamParams& stream, int token) {
  require(token >= 0 && static_cast<std::size_t>(token) < stream.E.cols,
          "token id out of range for embedding");
  Vec out(stream.E.rows);
  for (std::size_t r = 0; r < stream.E.rows; ++r) {
    out[r] = stream.E(r, static_cast<std::size_t>(token));
  }
  return out;
}

LSTMState lstm_step(const StreamParams& stream, const LSTMState& prev, const Vec& input,
                    bool cell_output_tanh) {
  const std::size_t d = stream.E.rows;
  require(input.size() == d, "lstm_step: input must have length D");
  require(prev.h.size() == d && prev.c.size() == d, "lstm_step: state must have length D");

  const Vec z = matvec(stream.T, concat(input, prev.h));
  LSTMState next = zero_state(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double i = sigmoid_scalar(z[j]);
    const double f = sigmoid_scalar(z[d + j]);
    const double o = sigmoid_scalar(z[2 * d + j]);
    const double g = std::tanh(z[3 * d + j]);
    const double c = f * prev.c[j] + i * g;
    next.c[j] = c;
    next.h[j] = cell_output_tanh ? o * std::tanh(c) : o * c;
  }
  return next;
}

Vec stream_dist(const StreamParams& stream, const LSTMState& state) {
  return softmax(matvec(stream.Wy, state.h));
}

double switch_prob(const SwitchingModel& model, const LSTMState& state0,
                   const LSTMState& state1) {
  const Vec both = concat(state0.h, state1.h);
  require(model.Ws.cols == both.size(), "switch_prob: state dimensions disagree with Ws");
  double logit = 0.0;
  for (std::size_t j = 0; j < both.size(); ++j) logit += model.Ws(0, j) * both[j];
  return sigmoid_scalar(logit);
}

StepOutput forward_step(const SwitchingModel& model, const LSTMState& state0,
                        const LSTMState& state1, const Vec& input0, const Vec& input1) {
  StepOutput out;
  out.state0 = lstm_step(model.stream0, state0, input0, model.cell_output_tanh);
  out.state1 = lstm_step(model.stream1, state1, input1, model.cell_output_tanh);
  out.dist0 = stream_dist(model.stream0, out.state0);
  out.dist1 = stream_dist(model.stream1, out.state1);
  out.gamma1 = switch_prob(model, out.state0, out.state1);
  const double gamma0 = 1.0 - out.gamma1;
  out.dist.resize(out.dist0.size());
  for (std::size_t v = 0; v < out.dist.size(); ++v) {
    out.dist[v] = gamma0 * out.dist0[v] + out.gamma1 * out.dist1[v];
  }
  return out;
}

std::vector<ScoredStep> sequence_forward(const SwitchingModel& model,
                                         const CaptionExample& example) {
  const ModelDims d = model.dims();
  require(!example.tokens.empty(), "sequence_forward: empty token sequence");
  require(example.tokens.back() == Vocabulary::kEos,
          "sequence_forward: sequence must end with EOS");
  require(example.feature.size() == d.feature,
          "sequence_forward: feature length disagrees with model D_x");

  std::vector<ScoredStep> steps;
  steps.reserve(example.tokens.size());
  LSTMState s0 = zero_state(d.hidden);
  LSTMState s1 = zero_state(d.hidden);
  for (std::size_t t = 0; t < example.tokens.size(); ++t) {
    const int target = example.tokens[t];
    require(target >= 0 && static_cast<std::size_t>(target) < d.vocab,
            "sequence_forward: token id out of range");
    Vec in0, in1;
    if (t == 0) {
      in0 = embed_first(model.stream0, example.feature);
      in1 = embed_first(model.stream1, example.feature);
    } else {
      in0 = embed_token(model.stream0, example.tokens[t - 1]);
      in1 = embed_token(model.stream1, example.tokens[t - 1]);
    }
    ScoredStep step;
    step.out = forward_step(model, s0, s1, in0, in1);
    step.log_prob = std::log(step.out.dist[static_cast<std::size_t>(target)]);
    s0 = step.out.state0;
    s1 = step.out.state1;
    steps.push_back(std::move(step));
  }
  return steps;
}

SwitchingModel make_switching_model(const StreamParams& background, std::uint64_t seed,
                                    Polarity polarity) {
  SwitchingModel m;
  m.stream0 = background;
  m.stream1 = background;
  const ModelDims d = background.dims();
  m.Ws = Matrix(1, 2 * d.hidden);
  Rng rng(seed);
  for (double& x : m.Ws.data) x = rng.uniform(-0.08, 0.08);
  m.polarity = polarity;
  return m;
}

Checkpoint background_to_checkpoint(const StreamParams& stream, const Vocabulary& vocab,
                                    const nlohmann::json& config_echo) {
  const ModelDims d = stream.dims();
  require(static_cast<std::size_t>(vocab.size()) == d.vocab,
          "vocabulary size disagrees with model V");
  Checkpoint ckpt;
  ckpt.metadata = base_metadata(kKindBackground, d, vocab, config_echo);
  append_stream_tensors(ckpt, stream, "stream0");
  return ckpt;
}

Checkpoint switching_to_checkpoint(const SwitchingModel& model, const Vocabulary& vocab,
                                   const nlohmann::json& config_echo) {
  const ModelDims d = model.dims();
  require(static_cast<std::size_t>(vocab.size()) == d.vocab,
          "vocabulary size disagrees with model V");
  Checkpoint ckpt;
  ckpt.metadata = base_metadata(kKindSwitching, d, vocab, config_echo);
  ckpt.metadata["polarity"] = to_string(model.polarity);
  ckpt.metadata["cell_output_tanh"] = model.cell_output_tanh;
  append_stream_tensors(ckpt, model.stream0, "stream0");
  append_stream_tensors(ckpt, model.stream1, "stream1");
  ckpt.tensors.push_back({"Ws", model.Ws});
  return ckpt;
}

LoadedBackground background_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.metadata.at("kind").get<std::string>() != kKindBackground) {
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "expected a background checkpoint");
  }
  LoadedBackground out{stream_from_checkpoint(ckpt, "stream0"), vocab_from_metadata(ckpt.metadata)};
  check_dims_against_metadata(ckpt.metadata, out.stream.dims());
  if (static_cast<std::size_t>(out.vocab.size()) != out.stream.dims().vocab) {
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "checkpoint vocabulary size disagrees with V");
  }
  return out;
}

LoadedSwitching switching_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.metadata.at("kind").get<std::string>() != kKindSwitching) {
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "expected a switching checkpoint");
  }
  LoadedSwitching out;
  out.model.stream0 = stream_from_checkpoint(ckpt, "stream0");
  out.model.stream1 = stream_from_checkpoint(ckpt, "stream1");
  out.model.Ws = ckpt.tensor("Ws");
  out.model.polarity = parse_polarity(ckpt.metadata.at("polarity").get<std::string>());
  out.model.cell_output_tanh = ckpt.metadata.value("cell_output_tanh", false);
  out.vocab = vocab_from_metadata(ckpt.metadata);
  ModelDims d;
  try {
    d = out.model.dims();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointError::Kind::inconsistent, e.what());
  }
  check_dims_against_metadata(ckpt.metadata, d);
  if (static_cast<std::size_t>(out.vocab.size()) != d.vocab) {
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "checkpoint vocabulary size disagrees with V");
  }
  return out;
}

LoadedSwitching switching_from_checkpoint_any(const Checkpoint& ckpt) {
  const std::string kind = ckpt.metadata.at("kind").get<std::string>();
  if (kind == kKindSwitching) return switching_from_checkpoint(ckpt);
  if (kind == kKindBackground) {
    LoadedBackground bg = background_from_checkpoint(ckpt);
    LoadedSwitching out;
    out.model.stream0 = bg.stream;
    out.model.stream1 = bg.stream;
    out.model.Ws = Matrix(1, 2 * bg.stream.dims().hidden);
    out.vocab = std::move(bg.vocab);
    return out;
  }
  throw CheckpointError(CheckpointError::Kind::inconsistent,
                        "checkpoint kind '" + kind + "' is not a model");
}

}  // namespace switchcap
