#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "switchcap/model.hpp"

namespace switchcap {

struct TrainConfig {
  double lambda_theta = 1e-3;  // weight of the L2 tether between the streams
  double lambda_eta = 1.0;     // extra likelihood weight on sentiment words
  double lambda_gamma = 1.0;   // weight of the gate cross-entropy
  double learning_rate = 0.001;
  double momentum = 0.99;
  std::size_t batch_size = 128;  // clamped to the corpus size
  double clip_lo = -5.0;
  double clip_hi = 5.0;
  double dropout_rate = 0.0;
  double base_l2 = 1e-8;
  std::size_t patience = 5;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 42;

  void validate() const;
};

/// One tensor per model parameter tensor. For the sentiment objective the
/// background tensors stay identically zero (the background stream is held
/// fixed); for background training only `stream0` is populated.
struct GradientSet {
  StreamParams stream0;
  StreamParams stream1;
  Matrix Ws;

  static GradientSet zeros_like(const SwitchingModel& model);
  static GradientSet zeros_like(const StreamParams& stream);
};

/// Negative log-likelihood of the corpus under a single stream.
double background_loss(const StreamParams& stream, const std::vector<CaptionExample>& corpus,
                       bool cell_output_tanh = false);

/// Weighted mixture log-likelihood plus gate cross-entropy, the L2 tether
/// between the streams, and the small default L2 on all weights. Gate
/// probabilities are clamped away from 0 and 1 inside the logs.
double sentiment_objective(const SwitchingModel& model,
                           const std::vector<CaptionExample>& corpus,
                           const TrainConfig& cfg);

/// Exact reverse-mode gradient of sentiment_objective with respect to the
/// sentiment stream and the switch weights. With a dropout rng the forward
/// pass applies per-step input and hidden dropout to both streams and the
/// gradient is exact for the sampled masks.
GradientSet gradients(const SwitchingModel& model, const std::vector<CaptionExample>& batch,
                      const TrainConfig& cfg, Rng* dropout_rng = nullptr);

/// Exact reverse-mode gradient of background_loss over all stream tensors.
GradientSet background_gradients(const StreamParams& stream,
                                 const std::vector<CaptionExample>& batch,
                                 const TrainConfig& cfg, Rng* dropout_rng = nullptr,
                                 bool cell_output_tanh = false);

enum class ParamTensor {
  stream0_T,
  stream0_E,
  stream0_Wx,
  stream0_Wy,
  stream1_T,
  stream1_E,
  stream1_Wx,
  stream1_Wy,
  switch_Ws,
};

/// Flat coordinate into one parameter tensor (row-major index).
struct ParamCoordinate {
  ParamTensor tensor;
  std::size_t index = 0;
};

bool is_frozen(ParamTensor tensor);
const char* tensor_name(ParamTensor tensor);
const Matrix& select_tensor(const SwitchingModel& model, ParamTensor tensor);
Matrix& select_tensor(SwitchingModel& model, ParamTensor tensor);
const Matrix& select_tensor(const GradientSet& grads, ParamTensor tensor);

/// The tensors trained by the sentiment objective, in a fixed order.
const std::vector<ParamTensor>& unfrozen_tensors();

/// Central finite difference of sentiment_objective at one unfrozen
/// coordinate, dropout disabled. Frozen coordinates are a contract
/// violation.
double finite_diff(const SwitchingModel& model, const std::vector<CaptionExample>& batch,
                   const TrainConfig& cfg, ParamCoordinate coordinate, double epsilon = 1e-4);

/// Elementwise clamp of every gradient tensor to [lo, hi].
GradientSet clip(GradientSet grads, double lo, double hi);

/// Inverted dropout: coordinates are zeroed with probability `rate`,
/// survivors scaled by 1/(1-rate).
Vec apply_dropout(const Vec& input, double rate, Rng& rng);

/// Classical momentum: v <- momentum*v - lr*g; theta <- theta + v.
/// The switching overload updates the sentiment stream and switch weights
/// only; the background stream is never touched.
void sgd_momentum_step(SwitchingModel& model, const GradientSet& grads, GradientSet& velocity,
                       const TrainConfig& cfg);
void sgd_momentum_step(StreamParams& stream, const GradientSet& grads, GradientSet& velocity,
                       const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_perplexity = 0.0;
  double seconds = 0.0;
};

using ProgressSink = std::function<void(const EpochRecord&)>;

/// exp(total single-stream NLL / total token count); tokens include EOS.
double stream_perplexity(const StreamParams& stream, const std::vector<CaptionExample>& corpus,
                         bool cell_output_tanh = false);

struct BackgroundFit {
  StreamParams stream;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// Trains a fresh stream (seeded uniform(-0.08, 0.08) init) by mini-batch
/// SGD with momentum, stopping on validation perplexity.
BackgroundFit fit_background(const ModelDims& dims,
                             const std::vector<CaptionExample>& train_corpus,
                             const std::vector<CaptionExample>& val_corpus,
                             const TrainConfig& cfg, const ProgressSink& sink = nullptr);

struct SentimentFit {
  SwitchingModel model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// Trains the sentiment stream and switch weights of `start` (background
/// stream held fixed), stopping on validation perplexity of the mixture.
SentimentFit fit_sentiment(const SwitchingModel& start,
                           const std::vector<CaptionExample>& train_corpus,
                           const std::vector<CaptionExample>& val_corpus,
                           const TrainConfig& cfg, const ProgressSink& sink = nullptr);

struct GridSearchResult {
  std::size_t best_index = 0;
  std::vector<double> val_perplexities;
};

/// Exhaustive hyperparameter evaluation by validation perplexity of the
/// trained mixture; ties keep the earlier grid point.
GridSearchResult grid_search(const SwitchingModel& base, const std::vector<TrainConfig>& grid,
                             const std::vector<CaptionExample>& train_corpus,
                             const std::vector<CaptionExample>& val_corpus);

/// Largest absolute elementwise difference across the two parameter sets.
double max_abs_diff(const StreamParams& a, const StreamParams& b);

/// Seeded tiny instance for the gradient oracle: D=8, V=12, D_x=6, T=5,
/// batch of 3. The teacher-forced inputs jointly cover all 12 token ids and
/// the sentiment stream starts displaced from the background one, so no
/// trained coordinate sits in a flat region of the objective.
struct GradcheckFixture {
  SwitchingModel model;
  std::vector<CaptionExample> batch;
  TrainConfig cfg;
};

GradcheckFixture make_gradcheck_fixture(std::uint64_t seed);

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  bool pass = false;
};

/// Compares the analytic gradient with central finite differences
/// (epsilon 1e-4) at every unfrozen coordinate; relative error uses
/// max(|analytic|, |numeric|, 1e-8) as denominator.
GradcheckReport run_gradient_check(const GradcheckFixture& fixture, double tolerance = 1e-4);

}  // namespace switchcap
