#include "switchcap/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "switchcap/eval.hpp"

namespace switchcap {

namespace {

constexpr double kGammaFloor = 1e-12;
constexpr double kProbFloor = 1e-300;

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

Vec draw_mask(std::size_t n, double rate, Rng& rng) {
  Vec mask(n);
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < n; ++i) mask[i] = rng.uniform() < rate ? 0.0 : scale;
  return mask;
}

/// Everything the backward pass needs from one forward step of one stream.
struct StepTrace {
  Vec u_fed;       // input embedding as it entered T (after dropout)
  Vec h_prev_fed;  // previous hidden as it entered T (after dropout)
  Vec mask_u;      // empty when dropout is off
  Vec mask_h;
  Vec i, f, o, g;
  Vec c_prev;
  Vec c, h;
  Vec p;  // softmax(Wy h)
};

std::vector<StepTrace> run_stream(const StreamParams& stream, const CaptionExample& ex,
                                  bool cell_output_tanh, double dropout_rate,
                                  Rng* dropout_rng) {
  const ModelDims dims = stream.dims();
  const std::size_t d = dims.hidden;
  require(!ex.tokens.empty(), "training example has no tokens");
  require(ex.feature.size() == dims.feature, "feature length disagrees with model D_x");
  require(ex.eta.size() == ex.tokens.size(), "eta length disagrees with token count");

  std::vector<StepTrace> trace;
  trace.reserve(ex.tokens.size());
  Vec h_prev(d, 0.0), c_prev(d, 0.0);
  for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
    StepTrace st;
    Vec u_raw = t == 0 ? embed_first(stream, ex.feature)
                       : embed_token(stream, ex.tokens[t - 1]);
    if (dropout_rng != nullptr && dropout_rate > 0.0) {
      st.mask_u = draw_mask(d, dropout_rate, *dropout_rng);
      st.mask_h = draw_mask(d, dropout_rate, *dropout_rng);
      st.u_fed = hadamard(u_raw, st.mask_u);
      st.h_prev_fed = hadamard(h_prev, st.mask_h);
    } else {
      st.u_fed = std::move(u_raw);
      st.h_prev_fed = h_prev;
    }
    const Vec z = matvec(stream.T, concat(st.u_fed, st.h_prev_fed));
    st.i.resize(d);
    st.f.resize(d);
    st.o.resize(d);
    st.g.resize(d);
    st.c.resize(d);
    st.h.resize(d);
    st.c_prev = c_prev;
    for (std::size_t j = 0; j < d; ++j) {
      st.i[j] = sigmoid_scalar(z[j]);
      st.f[j] = sigmoid_scalar(z[d + j]);
      st.o[j] = sigmoid_scalar(z[2 * d + j]);
      st.g[j] = std::tanh(z[3 * d + j]);
      st.c[j] = st.f[j] * c_prev[j] + st.i[j] * st.g[j];
      st.h[j] = cell_output_tanh ? st.o[j] * std::tanh(st.c[j]) : st.o[j] * st.c[j];
    }
    st.p = softmax(matvec(stream.Wy, st.h));
    h_prev = st.h;
    c_prev = st.c;
    trace.push_back(std::move(st));
  }
  return trace;
}

/// Reverse pass through one stream's recurrence. dq_step[t] is the gradient
/// into the output logits q_t = Wy h_t, dh_direct[t] any gradient flowing
/// into h_t from outside the stream (the gate). Accumulates into `grad`.
void stream_backward(const StreamParams& stream, const CaptionExample& ex,
                     const std::vector<StepTrace>& trace, const std::vector<Vec>& dq_step,
                     const std::vector<Vec>& dh_direct, bool cell_output_tanh,
                     StreamParams& grad) {
  const ModelDims dims = stream.dims();
  const std::size_t d = dims.hidden;
  Vec dh_next(d, 0.0), dc_next(d, 0.0);
  for (std::size_t ti = trace.size(); ti-- > 0;) {
    const StepTrace& st = trace[ti];
    Vec dh = dh_next;
    for (std::size_t j = 0; j < d; ++j) dh[j] += dh_direct[ti][j];

    const Vec& dq = dq_step[ti];
    for (std::size_t v = 0; v < dims.vocab; ++v) {
      if (dq[v] == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        grad.Wy(v, j) += dq[v] * st.h[j];
        dh[j] += stream.Wy(v, j) * dq[v];
      }
    }

    Vec do_(d), dc(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (cell_output_tanh) {
        const double tc = std::tanh(st.c[j]);
        do_[j] = dh[j] * tc;
        dc[j] = dc_next[j] + dh[j] * st.o[j] * (1.0 - tc * tc);
      } else {
        do_[j] = dh[j] * st.c[j];
        dc[j] = dc_next[j] + dh[j] * st.o[j];
      }
    }

    Vec dz(4 * d);
    for (std::size_t j = 0; j < d; ++j) {
      const double di = dc[j] * st.g[j];
      const double df = dc[j] * st.c_prev[j];
      const double dg = dc[j] * st.i[j];
      dc_next[j] = dc[j] * st.f[j];
      dz[j] = di * st.i[j] * (1.0 - st.i[j]);
      dz[d + j] = df * st.f[j] * (1.0 - st.f[j]);
      dz[2 * d + j] = do_[j] * st.o[j] * (1.0 - st.o[j]);
      dz[3 * d + j] = dg * (1.0 - st.g[j] * st.g[j]);
    }

    Vec dcat(2 * d, 0.0);
    for (std::size_t r = 0; r < 4 * d; ++r) {
      if (dz[r] == 0.0) continue;
      for (std::size_t cidx = 0; cidx < d; ++cidx) {
        grad.T(r, cidx) += dz[r] * st.u_fed[cidx];
        grad.T(r, d + cidx) += dz[r] * st.h_prev_fed[cidx];
        dcat[cidx] += stream.T(r, cidx) * dz[r];
        dcat[d + cidx] += stream.T(r, d + cidx) * dz[r];
      }
    }

    Vec du_raw(d), dh_prev(d);
    for (std::size_t j = 0; j < d; ++j) {
      du_raw[j] = st.mask_u.empty() ? dcat[j] : dcat[j] * st.mask_u[j];
      dh_prev[j] = st.mask_h.empty() ? dcat[d + j] : dcat[d + j] * st.mask_h[j];
    }
    dh_next = std::move(dh_prev);

    if (ti == 0) {
      for (std::size_t j = 0; j < d; ++j) {
        if (du_raw[j] == 0.0) continue;
        for (std::size_t k = 0; k < dims.feature; ++k) {
          grad.Wx(j, k) += du_raw[j] * ex.feature[k];
        }
      }
    } else {
      const auto col = static_cast<std::size_t>(ex.tokens[ti - 1]);
      for (std::size_t j = 0; j < d; ++j) grad.E(j, col) += du_raw[j];
    }
  }
}

// Same accumulation order as switch_prob so the two paths agree bitwise.
double gate_logit(const Matrix& ws, const Vec& h0, const Vec& h1) {
  const std::size_t d = h0.size();
  double a = 0.0;
  for (std::size_t j = 0; j < d; ++j) a += ws(0, j) * h0[j];
  for (std::size_t j = 0; j < d; ++j) a += ws(0, d + j) * h1[j];
  return a;
}

double squared_norm(const StreamParams& s) {
  double total = 0.0;
  for (const Matrix* m : {&s.T, &s.E, &s.Wx, &s.Wy}) {
    for (double x : m->data) total += x * x;
  }
  return total;
}

void check_gradient_finite(const GradientSet& grads) {
  const std::pair<const Matrix*, const char*> named[] = {
      {&grads.stream0.T, "stream0.T"},   {&grads.stream0.E, "stream0.E"},
      {&grads.stream0.Wx, "stream0.Wx"}, {&grads.stream0.Wy, "stream0.Wy"},
      {&grads.stream1.T, "stream1.T"},   {&grads.stream1.E, "stream1.E"},
      {&grads.stream1.Wx, "stream1.Wx"}, {&grads.stream1.Wy, "stream1.Wy"},
      {&grads.Ws, "Ws"},
  };
  for (const auto& [m, name] : named) {
    if (!all_finite(*m)) {
      throw std::runtime_error(std::string("non-finite gradient for ") + name);
    }
  }
}

void clamp_matrix(Matrix& m, double lo, double hi) {
  for (double& x : m.data) x = std::clamp(x, lo, hi);
}

void momentum_update(Matrix& param, const Matrix& grad, Matrix& velocity, double lr,
                     double momentum) {
  for (std::size_t idx = 0; idx < param.data.size(); ++idx) {
    velocity.data[idx] = momentum * velocity.data[idx] - lr * grad.data[idx];
    param.data[idx] += velocity.data[idx];
  }
}

std::vector<CaptionExample> gather(const std::vector<CaptionExample>& corpus,
                                   const std::vector<std::size_t>& order, std::size_t begin,
                                   std::size_t end) {
  std::vector<CaptionExample> batch;
  batch.reserve(end - begin);
  for (std::size_t k = begin; k < end; ++k) batch.push_back(corpus[order[k]]);
  return batch;
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void TrainConfig::validate() const {
  require(lambda_theta >= 0 && lambda_eta >= 0 && lambda_gamma >= 0,
          "lambda weights must be nonnegative");
  require(learning_rate >= 0 && std::isfinite(learning_rate),
          "learning_rate must be nonnegative");
  require(momentum >= 0 && momentum < 1, "momentum must be in [0,1)");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(clip_lo < clip_hi, "clip_lo must be below clip_hi");
  require(dropout_rate >= 0 && dropout_rate < 1, "dropout_rate must be in [0,1)");
  require(base_l2 >= 0, "base_l2 must be nonnegative");
  require(patience >= 1, "patience must be at least 1");
  require(max_epochs >= 1, "max_epochs must be at least 1");
}

GradientSet GradientSet::zeros_like(const SwitchingModel& model) {
  GradientSet g;
  const ModelDims d = model.dims();
  g.stream0 = StreamParams::zeros(d);
  g.stream1 = StreamParams::zeros(d);
  g.Ws = Matrix(1, 2 * d.hidden);
  return g;
}

GradientSet GradientSet::zeros_like(const StreamParams& stream) {
  GradientSet g;
  g.stream0 = StreamParams::zeros(stream.dims());
  return g;
}

double background_loss(const StreamParams& stream, const std::vector<CaptionExample>& corpus,
                       bool cell_output_tanh) {
  require(!corpus.empty(), "background_loss: empty corpus");
  double total = 0.0;
  for (const auto& ex : corpus) {
    const auto trace = run_stream(stream, ex, cell_output_tanh, 0.0, nullptr);
    for (std::size_t t = 0; t < trace.size(); ++t) {
      const auto y = static_cast<std::size_t>(ex.tokens[t]);
      total -= std::log(std::max(trace[t].p[y], kProbFloor));
    }
  }
  return total;
}

double sentiment_objective(const SwitchingModel& model,
                           const std::vector<CaptionExample>& corpus,
                           const TrainConfig& cfg) {
  require(!corpus.empty(), "sentiment_objective: empty corpus");
  const ModelDims dims = model.dims();
  (void)dims;
  double total = 0.0;
  for (const auto& ex : corpus) {
    const auto trace0 = run_stream(model.stream0, ex, model.cell_output_tanh, 0.0, nullptr);
    const auto trace1 = run_stream(model.stream1, ex, model.cell_output_tanh, 0.0, nullptr);
    for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
      const auto y = static_cast<std::size_t>(ex.tokens[t]);
      const double eta = ex.eta[t];
      const double w = 1.0 + cfg.lambda_eta * eta;
      const double gamma1 = sigmoid_scalar(gate_logit(model.Ws, trace0[t].h, trace1[t].h));
      const double gamma0 = 1.0 - gamma1;
      const double p_mix = gamma0 * trace0[t].p[y] + gamma1 * trace1[t].p[y];
      const double log_lik = std::log(std::max(p_mix, kProbFloor));
      const double g1c = std::clamp(gamma1, kGammaFloor, 1.0 - kGammaFloor);
      const double g0c = std::clamp(gamma0, kGammaFloor, 1.0 - kGammaFloor);
      const double gate_ce =
          cfg.lambda_gamma * (eta * std::log(g1c) + (1.0 - eta) * std::log(g0c));
      total -= w * (log_lik + gate_ce);
    }
  }

  double tether = 0.0;
  const Matrix* pairs[4][2] = {{&model.stream1.T, &model.stream0.T},
                               {&model.stream1.E, &model.stream0.E},
                               {&model.stream1.Wx, &model.stream0.Wx},
                               {&model.stream1.Wy, &model.stream0.Wy}};
  for (const auto& [m1, m0] : pairs) {
    for (std::size_t idx = 0; idx < m1->data.size(); ++idx) {
      const double diff = m1->data[idx] - m0->data[idx];
      tether += diff * diff;
    }
  }
  total += 0.5 * cfg.lambda_theta * tether;

  double norm = squared_norm(model.stream0) + squared_norm(model.stream1);
  for (double x : model.Ws.data) norm += x * x;
  total += cfg.base_l2 * norm;
  return total;
}

GradientSet gradients(const SwitchingModel& model, const std::vector<CaptionExample>& batch,
                      const TrainConfig& cfg, Rng* dropout_rng) {
  require(!batch.empty(), "gradients: empty batch");
  const ModelDims dims = model.dims();
  const std::size_t d = dims.hidden;
  GradientSet grads = GradientSet::zeros_like(model);

  for (const auto& ex : batch) {
    const auto trace0 =
        run_stream(model.stream0, ex, model.cell_output_tanh, cfg.dropout_rate, dropout_rng);
    const auto trace1 =
        run_stream(model.stream1, ex, model.cell_output_tanh, cfg.dropout_rate, dropout_rng);
    const std::size_t steps = ex.tokens.size();
    std::vector<Vec> dq1(steps, Vec(dims.vocab, 0.0));
    std::vector<Vec> dh1(steps, Vec(d, 0.0));

    for (std::size_t t = 0; t < steps; ++t) {
      const auto y = static_cast<std::size_t>(ex.tokens[t]);
      const double eta = ex.eta[t];
      const double w = 1.0 + cfg.lambda_eta * eta;
      const Vec& h0 = trace0[t].h;
      const Vec& h1 = trace1[t].h;
      const Vec& p0 = trace0[t].p;
      const Vec& p1 = trace1[t].p;
      const double gamma1 = sigmoid_scalar(gate_logit(model.Ws, h0, h1));
      const double gamma0 = 1.0 - gamma1;
      const double p_mix = std::max(gamma0 * p0[y] + gamma1 * p1[y], kProbFloor);

      // Output logits of the sentiment stream: the chain through the mixture
      // collapses to the stream-1 posterior responsibility of the gold word.
      const double r1 = gamma1 * p1[y] / p_mix;
      for (std::size_t v = 0; v < dims.vocab; ++v) dq1[t][v] = w * r1 * p1[v];
      dq1[t][y] -= w * r1;

      // Gate logit: likelihood route plus the clamped cross-entropy route.
      const double dlik_da = (p1[y] - p0[y]) * gamma1 * gamma0 / p_mix;
      const double g1c = std::clamp(gamma1, kGammaFloor, 1.0 - kGammaFloor);
      const double g0c = std::clamp(gamma0, kGammaFloor, 1.0 - kGammaFloor);
      const bool g1_interior = gamma1 > kGammaFloor && gamma1 < 1.0 - kGammaFloor;
      const bool g0_interior = gamma0 > kGammaFloor && gamma0 < 1.0 - kGammaFloor;
      const double dce_da =
          cfg.lambda_gamma * (eta * (g1_interior ? gamma1 * gamma0 / g1c : 0.0) -
                              (1.0 - eta) * (g0_interior ? gamma1 * gamma0 / g0c : 0.0));
      const double da = -w * (dlik_da + dce_da);

      for (std::size_t j = 0; j < d; ++j) {
        grads.Ws(0, j) += da * h0[j];
        grads.Ws(0, d + j) += da * h1[j];
        dh1[t][j] += da * model.Ws(0, d + j);
      }
    }
    stream_backward(model.stream1, ex, trace1, dq1, dh1, model.cell_output_tanh,
                    grads.stream1);
  }

  const Matrix* params1[4] = {&model.stream1.T, &model.stream1.E, &model.stream1.Wx,
                              &model.stream1.Wy};
  const Matrix* params0[4] = {&model.stream0.T, &model.stream0.E, &model.stream0.Wx,
                              &model.stream0.Wy};
  Matrix* targets[4] = {&grads.stream1.T, &grads.stream1.E, &grads.stream1.Wx,
                        &grads.stream1.Wy};
  for (int k = 0; k < 4; ++k) {
    for (std::size_t idx = 0; idx < targets[k]->data.size(); ++idx) {
      targets[k]->data[idx] +=
          cfg.lambda_theta * (params1[k]->data[idx] - params0[k]->data[idx]) +
          2.0 * cfg.base_l2 * params1[k]->data[idx];
    }
  }
  for (std::size_t idx = 0; idx < grads.Ws.data.size(); ++idx) {
    grads.Ws.data[idx] += 2.0 * cfg.base_l2 * model.Ws.data[idx];
  }

  check_gradient_finite(grads);
  return grads;
}

GradientSet background_gradients(const StreamParams& stream,
                                 const std::vector<CaptionExample>& batch,
                                 const TrainConfig& cfg, Rng* dropout_rng,
                                 bool cell_output_tanh) {
  require(!batch.empty(), "background_gradients: empty batch");
  const ModelDims dims = stream.dims();
  GradientSet grads = GradientSet::zeros_like(stream);
  for (const auto& ex : batch) {
    const auto trace = run_stream(stream, ex, cell_output_tanh, cfg.dropout_rate, dropout_rng);
    const std::size_t steps = ex.tokens.size();
    std::vector<Vec> dq(steps, Vec(dims.vocab, 0.0));
    std::vector<Vec> dh(steps, Vec(dims.hidden, 0.0));
    for (std::size_t t = 0; t < steps; ++t) {
      const auto y = static_cast<std::size_t>(ex.tokens[t]);
      dq[t] = trace[t].p;
      dq[t][y] -= 1.0;
    }
    stream_backward(stream, ex, trace, dq, dh, cell_output_tanh, grads.stream0);
  }
  check_gradient_finite(grads);
  return grads;
}

bool is_frozen(ParamTensor tensor) {
  switch (tensor) {
    case ParamTensor::stream0_T:
    case ParamTensor::stream0_E:
    case ParamTensor::stream0_Wx:
    case ParamTensor::stream0_Wy:
      return true;
    default:
      return false;
  }
}

const char* tensor_name(ParamTensor tensor) {
  switch (tensor) {
    case ParamTensor::stream0_T: return "stream0.T";
    case ParamTensor::stream0_E: return "stream0.E";
    case ParamTensor::stream0_Wx: return "stream0.Wx";
    case ParamTensor::stream0_Wy: return "stream0.Wy";
    case ParamTensor::stream1_T: return "stream1.T";
    case ParamTensor::stream1_E: return "stream1.E";
    case ParamTensor::stream1_Wx: return "stream1.Wx";
    case ParamTensor::stream1_Wy: return "stream1.Wy";
    case ParamTensor::switch_Ws: return "Ws";
  }
  return "?";
}

Matrix& select_tensor(SwitchingModel& model, ParamTensor tensor) {
  switch (tensor) {
    case ParamTensor::stream0_T: return model.stream0.T;
    case ParamTensor::stream0_E: return model.stream0.E;
    case ParamTensor::stream0_Wx: return model.stream0.Wx;
    case ParamTensor::stream0_Wy: return model.stream0.Wy;
    case ParamTensor::stream1_T: return model.stream1.T;
    case ParamTensor::stream1_E: return model.stream1.E;
    case ParamTensor::stream1_Wx: return model.stream1.Wx;
    case ParamTensor::stream1_Wy: return model.stream1.Wy;
    case ParamTensor::switch_Ws: return model.Ws;
  }
  throw std::invalid_argument("unknown parameter tensor");
}

const Matrix& select_tensor(const SwitchingModel& model, ParamTensor tensor) {
  return select_tensor(const_cast<SwitchingModel&>(model), tensor);
}

const Matrix& select_tensor(const GradientSet& grads, ParamTensor tensor) {
  switch (tensor) {
    case ParamTensor::stream0_T: return grads.stream0.T;
    case ParamTensor::stream0_E: return grads.stream0.E;
    case ParamTensor::stream0_Wx: return grads.stream0.Wx;
    case ParamTensor::stream0_Wy: return grads.stream0.Wy;
    case ParamTensor::stream1_T: return grads.stream1.T;
    case ParamTensor::stream1_E: return grads.stream1.E;
    case ParamTensor::stream1_Wx: return grads.stream1.Wx;
    case ParamTensor::stream1_Wy: return grads.stream1.Wy;
    case ParamTensor::switch_Ws: return grads.Ws;
  }
  throw std::invalid_argument("unknown parameter tensor");
}

const std::vector<ParamTensor>& unfrozen_tensors() {
  static const std::vector<ParamTensor> tensors = {
      ParamTensor::stream1_T, ParamTensor::stream1_E, ParamTensor::stream1_Wx,
      ParamTensor::stream1_Wy, ParamTensor::switch_Ws};
  return tensors;
}

double finite_diff(const SwitchingModel& model, const std::vector<CaptionExample>& batch,
                   const TrainConfig& cfg, ParamCoordinate coordinate, double epsilon) {
  if (is_frozen(coordinate.tensor)) {
    throw std::invalid_argument(std::string("finite_diff: ") + tensor_name(coordinate.tensor) +
                                " is frozen");
  }
  SwitchingModel probe = model;
  Matrix& tensor = select_tensor(probe, coordinate.tensor);
  if (coordinate.index >= tensor.data.size()) {
    throw std::invalid_argument("finite_diff: coordinate index out of range");
  }
  const double original = tensor.data[coordinate.index];
  tensor.data[coordinate.index] = original + epsilon;
  const double plus = sentiment_objective(probe, batch, cfg);
  tensor.data[coordinate.index] = original - epsilon;
  const double minus = sentiment_objective(probe, batch, cfg);
  return (plus - minus) / (2.0 * epsilon);
}

GradientSet clip(GradientSet grads, double lo, double hi) {
  require(lo < hi, "clip: lo must be below hi");
  for (Matrix* m : {&grads.stream0.T, &grads.stream0.E, &grads.stream0.Wx, &grads.stream0.Wy,
                    &grads.stream1.T, &grads.stream1.E, &grads.stream1.Wx, &grads.stream1.Wy,
                    &grads.Ws}) {
    clamp_matrix(*m, lo, hi);
  }
  return grads;
}

Vec apply_dropout(const Vec& input, double rate, Rng& rng) {
  require(rate >= 0 && rate < 1, "dropout rate must be in [0,1)");
  if (rate == 0.0) return input;
  return hadamard(input, draw_mask(input.size(), rate, rng));
}

void sgd_momentum_step(SwitchingModel& model, const GradientSet& grads, GradientSet& velocity,
                       const TrainConfig& cfg) {
  momentum_update(model.stream1.T, grads.stream1.T, velocity.stream1.T, cfg.learning_rate,
                  cfg.momentum);
  momentum_update(model.stream1.E, grads.stream1.E, velocity.stream1.E, cfg.learning_rate,
                  cfg.momentum);
  momentum_update(model.stream1.Wx, grads.stream1.Wx, velocity.stream1.Wx, cfg.learning_rate,
                  cfg.momentum);
  momentum_update(model.stream1.Wy, grads.stream1.Wy, velocity.stream1.Wy, cfg.learning_rate,
                  cfg.momentum);
  momentum_update(model.Ws, grads.Ws, velocity.Ws, cfg.learning_rate, cfg.momentum);
}

void sgd_momentum_step(StreamParams& stream, const GradientSet& grads, GradientSet& velocity,
                       const TrainConfig& cfg) {
  momentum_update(stream.T, grads.stream0.T, velocity.stream0.T, cfg.learning_rate,
                  cfg.momentum);
  momentum_update(stream.E, grads.stream0.E, velocity.stream0.E, cfg.learning_rate,
                  cfg.momentum);
  momentum_update(stream.Wx, grads.stream0.Wx, velocity.stream0.Wx, cfg.learning_rate,
                  cfg.momentum);
  momentum_update(stream.Wy, grads.stream0.Wy, velocity.stream0.Wy, cfg.learning_rate,
                  cfg.momentum);
}

double stream_perplexity(const StreamParams& stream, const std::vector<CaptionExample>& corpus,
                         bool cell_output_tanh) {
  require(!corpus.empty(), "stream_perplexity: empty corpus");
  std::size_t tokens = 0;
  for (const auto& ex : corpus) tokens += ex.tokens.size();
  return std::exp(background_loss(stream, corpus, cell_output_tanh) /
                  static_cast<double>(tokens));
}

BackgroundFit fit_background(const ModelDims& dims,
                             const std::vector<CaptionExample>& train_corpus,
                             const std::vector<CaptionExample>& val_corpus,
                             const TrainConfig& cfg, const ProgressSink& sink) {
  cfg.validate();
  require(!train_corpus.empty(), "fit_background: empty training corpus");
  require(!val_corpus.empty(), "fit_background: empty validation corpus");

  Rng rng(cfg.seed);
  BackgroundFit fit;
  StreamParams stream = StreamParams::random_init(dims, rng);
  GradientSet velocity = GradientSet::zeros_like(stream);

  const std::size_t batch = std::min(cfg.batch_size, train_corpus.size());
  std::vector<std::size_t> order(train_corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_ppl = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    shuffle(order, rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(begin + batch, order.size());
      const auto examples = gather(train_corpus, order, begin, end);
      Rng* drop = cfg.dropout_rate > 0.0 ? &rng : nullptr;
      GradientSet grads = clip(background_gradients(stream, examples, cfg, drop),
                               cfg.clip_lo, cfg.clip_hi);
      sgd_momentum_step(stream, grads, velocity, cfg);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = background_loss(stream, train_corpus);
    rec.val_perplexity = stream_perplexity(stream, val_corpus);
    rec.seconds = elapsed_seconds(start);
    fit.history.push_back(rec);
    if (sink) sink(rec);
    if (rec.val_perplexity < best_ppl) {
      best_ppl = rec.val_perplexity;
      fit.stream = stream;
      fit.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= cfg.patience) break;
  }
  if (fit.best_epoch == 0) fit.stream = stream;  // never improved on +inf: cannot happen
  return fit;
}

SentimentFit fit_sentiment(const SwitchingModel& start,
                           const std::vector<CaptionExample>& train_corpus,
                           const std::vector<CaptionExample>& val_corpus,
                           const TrainConfig& cfg, const ProgressSink& sink) {
  cfg.validate();
  require(!train_corpus.empty(), "fit_sentiment: empty training corpus");
  require(!val_corpus.empty(), "fit_sentiment: empty validation corpus");

  Rng rng(cfg.seed);
  SentimentFit fit;
  SwitchingModel model = start;
  GradientSet velocity = GradientSet::zeros_like(model);

  const std::size_t batch = std::min(cfg.batch_size, train_corpus.size());
  std::vector<std::size_t> order(train_corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_ppl = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start_time = std::chrono::steady_clock::now();
    shuffle(order, rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(begin + batch, order.size());
      const auto examples = gather(train_corpus, order, begin, end);
      Rng* drop = cfg.dropout_rate > 0.0 ? &rng : nullptr;
      GradientSet grads =
          clip(gradients(model, examples, cfg, drop), cfg.clip_lo, cfg.clip_hi);
      sgd_momentum_step(model, grads, velocity, cfg);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sentiment_objective(model, train_corpus, cfg);
    rec.val_perplexity = perplexity(model, val_corpus);
    rec.seconds = elapsed_seconds(start_time);
    fit.history.push_back(rec);
    if (sink) sink(rec);
    if (rec.val_perplexity < best_ppl) {
      best_ppl = rec.val_perplexity;
      fit.model = model;
      fit.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= cfg.patience) break;
  }
  if (fit.best_epoch == 0) fit.model = model;
  return fit;
}

GridSearchResult grid_search(const SwitchingModel& base, const std::vector<TrainConfig>& grid,
                             const std::vector<CaptionExample>& train_corpus,
                             const std::vector<CaptionExample>& val_corpus) {
  if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
  GridSearchResult result;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    SentimentFit fit = fit_sentiment(base, train_corpus, val_corpus, grid[k]);
    const double ppl = perplexity(fit.model, val_corpus);
    result.val_perplexities.push_back(ppl);
    if (ppl < best) {
      best = ppl;
      result.best_index = k;
    }
  }
  return result;
}

GradcheckFixture make_gradcheck_fixture(std::uint64_t seed) {
  GradcheckFixture fx;
  const ModelDims dims{8, 12, 6};
  Rng rng(seed);
  fx.model.stream0 = StreamParams::random_init(dims, rng, 0.25);
  fx.model.stream1 = fx.model.stream0;
  // Displace every sentiment coordinate by at least 0.01 so the tether
  // keeps all finite-difference denominators well conditioned.
  for (Matrix* m : {&fx.model.stream1.T, &fx.model.stream1.E, &fx.model.stream1.Wx,
                    &fx.model.stream1.Wy}) {
    for (double& x : m->data) {
      const double mag = rng.uniform(0.01, 0.05);
      x += rng.uniform() < 0.5 ? -mag : mag;
    }
  }
  fx.model.Ws = Matrix(1, 2 * dims.hidden);
  for (double& x : fx.model.Ws.data) x = rng.uniform(-0.3, 0.3);

  std::vector<int> perm(dims.vocab);
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  for (std::size_t s = 0; s < 3; ++s) {
    CaptionExample ex;
    ex.image_id = "gradcheck-" + std::to_string(s);
    for (std::size_t k = 0; k < dims.feature; ++k) ex.feature.push_back(rng.uniform(-1, 1));
    for (std::size_t k = 0; k < 4; ++k) ex.tokens.push_back(perm[4 * s + k]);
    ex.tokens.push_back(Vocabulary::kEos);
    for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
      ex.eta.push_back((t + s) % 2 == 0 ? 1.0 : 0.0);
    }
    fx.batch.push_back(std::move(ex));
  }

  fx.cfg.lambda_theta = 0.5;
  fx.cfg.lambda_eta = 1.5;
  fx.cfg.lambda_gamma = 2.0;
  fx.cfg.base_l2 = 1e-8;
  fx.cfg.dropout_rate = 0.0;
  return fx;
}

GradcheckReport run_gradient_check(const GradcheckFixture& fixture, double tolerance) {
  TrainConfig cfg = fixture.cfg;
  cfg.dropout_rate = 0.0;
  GradcheckReport report;
  const GradientSet grads = gradients(fixture.model, fixture.batch, cfg);
  for (ParamTensor tensor : unfrozen_tensors()) {
    const Matrix& analytic = select_tensor(grads, tensor);
    for (std::size_t idx = 0; idx < analytic.data.size(); ++idx) {
      const double numeric = finite_diff(fixture.model, fixture.batch, cfg, {tensor, idx});
      const double a = analytic.data[idx];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = tensor_name(tensor);
        report.worst_index = idx;
      }
      ++report.coordinates;
    }
  }
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

double max_abs_diff(const StreamParams& a, const StreamParams& b) {
  double worst = 0.0;
  const Matrix* lhs[4] = {&a.T, &a.E, &a.Wx, &a.Wy};
  const Matrix* rhs[4] = {&b.T, &b.E, &b.Wx, &b.Wy};
  for (int k = 0; k < 4; ++k) {
    require(lhs[k]->same_shape(*rhs[k]), "max_abs_diff: shape mismatch");
    for (std::size_t idx = 0; idx < lhs[k]->data.size(); ++idx) {
      worst = std::max(worst, std::abs(lhs[k]->data[idx] - rhs[k]->data[idx]));
    }
  }
  return worst;
}

}  // namespace switchcap
