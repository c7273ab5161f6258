#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "switchcap/model.hpp"

using namespace switchcap;

namespace {

SwitchingModel random_model(const ModelDims& dims, std::uint64_t seed, double scale = 0.4) {
  Rng rng(seed);
  SwitchingModel m;
  m.stream0 = StreamParams::random_init(dims, rng, scale);
  m.stream1 = StreamParams::random_init(dims, rng, scale);
  m.Ws = Matrix(1, 2 * dims.hidden);
  for (double& x : m.Ws.data) x = rng.uniform(-scale, scale);
  return m;
}

CaptionExample random_example(const ModelDims& dims, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  CaptionExample ex;
  ex.image_id = "r" + std::to_string(seed);
  for (std::size_t k = 0; k < dims.feature; ++k) ex.feature.push_back(rng.uniform(-1, 1));
  for (std::size_t t = 0; t + 1 < len; ++t) {
    ex.tokens.push_back(static_cast<int>(rng.uniform_index(dims.vocab)));
  }
  ex.tokens.push_back(Vocabulary::kEos);
  ex.eta.assign(ex.tokens.size(), 0.0);
  return ex;
}

}  // namespace

TEST_CASE("embed_first") {
  ModelDims dims{2, 4, 2};
  StreamParams s = StreamParams::zeros(dims);
  SUBCASE("zero weights give zero embedding") {
    CHECK(embed_first(s, Vec{3, 4}) == Vec{0, 0});
  }
  SUBCASE("identity passes the feature through") {
    s.Wx = Matrix::identity(2);
    CHECK(embed_first(s, Vec{3, 4}) == Vec{3, 4});
  }
  SUBCASE("hand-computed projection") {
    s.Wx(0, 0) = 1; s.Wx(0, 1) = 2; s.Wx(1, 0) = 0; s.Wx(1, 1) = 1;
    CHECK(embed_first(s, Vec{1, 1}) == Vec{3, 1});
  }
  SUBCASE("dimension mismatch throws") {
    CHECK_THROWS_AS(embed_first(s, Vec{1, 2, 3}), std::invalid_argument);
  }
}

TEST_CASE("embed_token extracts the embedding column") {
  ModelDims dims{2, 3, 1};
  StreamParams s = StreamParams::zeros(dims);
  s.E(0, 2) = 5.0;
  s.E(1, 2) = -1.0;
  CHECK(embed_token(s, 2) == Vec{5, -1});
  CHECK_THROWS_AS(embed_token(s, 3), std::invalid_argument);
}

TEST_CASE("lstm_step closed-form cases") {
  ModelDims dims{3, 4, 2};
  const StreamParams s = StreamParams::zeros(dims);
  SUBCASE("zero everything") {
    const LSTMState next = lstm_step(s, zero_state(3), Vec{0, 0, 0});
    CHECK(next.c == Vec{0, 0, 0});
    CHECK(next.h == Vec{0, 0, 0});
  }
  SUBCASE("zero weights with unit previous cell") {
    // gates sit at 1/2, g at 0: c' = 0.5, h' = o*c' = 0.25
    LSTMState prev = zero_state(3);
    prev.c = Vec{1, 1, 1};
    const LSTMState next = lstm_step(s, prev, Vec{0, 0, 0});
    for (double c : next.c) CHECK(c == doctest::Approx(0.5).epsilon(1e-15));
    for (double h : next.h) CHECK(h == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("cell_output_tanh variant applies tanh before the output gate") {
    LSTMState prev = zero_state(3);
    prev.c = Vec{1, 1, 1};
    const LSTMState next = lstm_step(s, prev, Vec{0, 0, 0}, true);
    for (double h : next.h) CHECK(h == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-15));
  }
}

TEST_CASE("lstm_step matches the scalar oracle on random instances") {
  const ModelDims dims{5, 4, 3};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const StreamParams s = StreamParams::random_init(dims, rng, 0.7);
    LSTMState prev;
    Vec input;
    for (std::size_t j = 0; j < dims.hidden; ++j) {
      prev.h.push_back(rng.uniform(-1, 1));
      prev.c.push_back(rng.uniform(-1, 1));
      input.push_back(rng.uniform(-1, 1));
    }
    for (bool tanh_variant : {false, true}) {
      const LSTMState next = lstm_step(s, prev, input, tanh_variant);
      std::vector<double> h_ref, c_ref;
      oracle::lstm_step_scalar(s.T.data, dims.hidden, input, prev.h, prev.c, tanh_variant,
                               h_ref, c_ref);
      for (std::size_t j = 0; j < dims.hidden; ++j) {
        CHECK(std::abs(next.h[j] - h_ref[j]) <= 1e-12);
        CHECK(std::abs(next.c[j] - c_ref[j]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("stream_dist") {
  ModelDims dims{2, 4, 1};
  StreamParams s = StreamParams::zeros(dims);
  SUBCASE("zero weights give the uniform distribution") {
    LSTMState state{{1.0, -1.0}, {0, 0}};
    CHECK(stream_dist(s, state) == Vec{0.25, 0.25, 0.25, 0.25});
  }
  SUBCASE("zero state gives the uniform distribution") {
    Rng rng(3);
    for (double& x : s.Wy.data) x = rng.uniform(-1, 1);
    CHECK(stream_dist(s, zero_state(2)) == Vec{0.25, 0.25, 0.25, 0.25});
  }
  SUBCASE("closed form with rows 0 and ln 3") {
    ModelDims d1{1, 2, 1};
    StreamParams t = StreamParams::zeros(d1);
    t.Wy(0, 0) = 0.0;
    t.Wy(1, 0) = std::log(3.0);
    LSTMState state{{1.0}, {0.0}};
    const Vec dist = stream_dist(t, state);
    CHECK(dist[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(dist[1] == doctest::Approx(0.75).epsilon(1e-14));
  }
}

TEST_CASE("switch_prob") {
  ModelDims dims{2, 3, 1};
  SwitchingModel m = random_model(dims, 17);
  SUBCASE("zero weights sit at 1/2") {
    m.Ws = Matrix(1, 4);
    CHECK(switch_prob(m, zero_state(2), zero_state(2)) == 0.5);
  }
  SUBCASE("logit ln 3 gives 3/4") {
    m.Ws = Matrix(1, 4);
    m.Ws(0, 0) = std::log(3.0);
    LSTMState s0{{1.0, 0.0}, {0, 0}};
    CHECK(switch_prob(m, s0, zero_state(2)) == doctest::Approx(0.75).epsilon(1e-14));
  }
  SUBCASE("negating the weights flips the gate") {
    LSTMState s0{{0.3, -0.2}, {0, 0}}, s1{{0.1, 0.8}, {0, 0}};
    const double g = switch_prob(m, s0, s1);
    for (double& x : m.Ws.data) x = -x;
    CHECK(switch_prob(m, s0, s1) == doctest::Approx(1.0 - g).epsilon(1e-12));
  }
  SUBCASE("monotone in the logit") {
    LSTMState s0{{1.0, 0.0}, {0, 0}};
    SwitchingModel base = m;
    base.Ws = Matrix(1, 4);
    double prev = 0.0;
    for (double w : {-2.0, -0.5, 0.0, 0.5, 2.0}) {
      base.Ws(0, 0) = w;
      const double g = switch_prob(base, s0, zero_state(2));
      if (w > -2.0) CHECK(g > prev);
      prev = g;
    }
  }
}

TEST_CASE("forward_step mixes the per-stream distributions") {
  const ModelDims dims{2, 2, 2};
  SUBCASE("equal components give the common distribution for any gate") {
    SwitchingModel m = random_model(dims, 23);
    m.stream1 = m.stream0;
    const Vec in0 = embed_first(m.stream0, Vec{0.5, -0.5});
    const StepOutput out = forward_step(m, zero_state(2), zero_state(2), in0, in0);
    for (std::size_t v = 0; v < 2; ++v) {
      CHECK(std::abs(out.dist[v] - out.dist0[v]) <= 1e-12);
    }
  }
  SUBCASE("hand-mixed values") {
    // gamma = 1/2 over (0.8,0.2) and (0.2,0.8) gives (0.5,0.5);
    // gamma = 3/4 gives (0.35,0.65)
    const Vec d0 = {0.8, 0.2}, d1 = {0.2, 0.8};
    for (auto [gamma, e0, e1] : {std::tuple{0.5, 0.5, 0.5}, std::tuple{0.75, 0.35, 0.65}}) {
      const double mixed0 = (1 - gamma) * d0[0] + gamma * d1[0];
      const double mixed1 = (1 - gamma) * d0[1] + gamma * d1[1];
      CHECK(mixed0 == doctest::Approx(e0).epsilon(1e-12));
      CHECK(mixed1 == doctest::Approx(e1).epsilon(1e-12));
    }
  }
}

TEST_CASE("sequence_forward") {
  SUBCASE("all-zero parameters score every step at -ln V") {
    const ModelDims dims{3, 6, 2};
    SwitchingModel m;
    m.stream0 = StreamParams::zeros(dims);
    m.stream1 = StreamParams::zeros(dims);
    m.Ws = Matrix(1, 6);
    CaptionExample ex;
    ex.feature = {0.4, -0.2};
    ex.tokens = {3, 2, Vocabulary::kEos};
    ex.eta = {0, 0, 0};
    const auto steps = sequence_forward(m, ex);
    REQUIRE(steps.size() == 3);
    for (const auto& step : steps) {
      CHECK(step.log_prob == doctest::Approx(-std::log(6.0)).epsilon(1e-12));
      CHECK(step.out.gamma1 == 0.5);
    }
  }
  SUBCASE("single-token sequence takes exactly one step") {
    const ModelDims dims{2, 4, 1};
    SwitchingModel m = random_model(dims, 31);
    CaptionExample ex;
    ex.feature = {1.0};
    ex.tokens = {Vocabulary::kEos};
    ex.eta = {0};
    CHECK(sequence_forward(m, ex).size() == 1);
  }
  SUBCASE("sequence not ending in EOS is rejected") {
    const ModelDims dims{2, 4, 1};
    SwitchingModel m = random_model(dims, 31);
    CaptionExample ex;
    ex.feature = {1.0};
    ex.tokens = {2};
    ex.eta = {0};
    CHECK_THROWS_AS(sequence_forward(m, ex), std::invalid_argument);
  }
  SUBCASE("matches the scalar oracle on random tiny models") {
    const ModelDims dims{4, 7, 3};
    for (std::uint64_t seed = 40; seed < 50; ++seed) {
      const SwitchingModel m = random_model(dims, seed);
      const CaptionExample ex = random_example(dims, 4, seed + 1000);
      const auto steps = sequence_forward(m, ex);
      const auto ref = oracle::sequence_scalar(m, ex);
      REQUIRE(steps.size() == ref.size());
      double lib_total = 0.0, ref_total = 0.0;
      for (std::size_t t = 0; t < steps.size(); ++t) {
        CHECK(std::abs(steps[t].out.gamma1 - ref[t].gamma1) <= 1e-12);
        for (std::size_t v = 0; v < dims.vocab; ++v) {
          CHECK(std::abs(steps[t].out.dist[v] - ref[t].marginal[v]) <= 1e-12);
        }
        lib_total += steps[t].log_prob;
        ref_total += std::log(ref[t].marginal[static_cast<std::size_t>(ex.tokens[t])]);
      }
      CHECK(lib_total == doctest::Approx(ref_total).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward invariants over random steps") {
  const ModelDims dims{5, 9, 4};
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    const SwitchingModel m = random_model(dims, seed, 0.8);
    const CaptionExample ex = random_example(dims, 5, seed + 7);
    for (const auto& step : sequence_forward(m, ex)) {
      double sum = 0.0;
      for (double p : step.out.dist) {
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      CHECK(step.out.gamma1 > 0.0);
      CHECK(step.out.gamma1 < 1.0);
      const double gamma0 = 1.0 - step.out.gamma1;
      CHECK(gamma0 + step.out.gamma1 == 1.0);
      CHECK(all_finite(step.out.dist));
    }
  }
}

TEST_CASE("stream collapse: equal streams mix to the single-stream distribution") {
  const ModelDims dims{4, 6, 3};
  for (std::uint64_t seed = 300; seed < 320; ++seed) {
    SwitchingModel m = random_model(dims, seed, 0.9);
    m.stream1 = m.stream0;
    const CaptionExample ex = random_example(dims, 4, seed + 11);
    const auto steps = sequence_forward(m, ex);
    LSTMState s = zero_state(dims.hidden);
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const Vec input = t == 0 ? embed_first(m.stream0, ex.feature)
                               : embed_token(m.stream0, ex.tokens[t - 1]);
      s = lstm_step(m.stream0, s, input);
      const Vec single = stream_dist(m.stream0, s);
      for (std::size_t v = 0; v < dims.vocab; ++v) {
        CHECK(std::abs(steps[t].out.dist[v] - single[v]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("forward determinism") {
  const ModelDims dims{4, 6, 3};
  const SwitchingModel m = random_model(dims, 555);
  const CaptionExample ex = random_example(dims, 5, 556);
  const auto a = sequence_forward(m, ex);
  const auto b = sequence_forward(m, ex);
  REQUIRE(a.size() == b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(a[t].log_prob == b[t].log_prob);
    CHECK(a[t].out.dist == b[t].out.dist);
    CHECK(a[t].out.gamma1 == b[t].out.gamma1);
  }
}

TEST_CASE("make_switching_model copies the background and seeds the switch") {
  const ModelDims dims{3, 5, 2};
  Rng rng(9);
  const StreamParams background = StreamParams::random_init(dims, rng);
  const SwitchingModel a = make_switching_model(background, 42, Polarity::negative);
  const SwitchingModel b = make_switching_model(background, 42, Polarity::negative);
  CHECK(a.stream1.T.data == background.T.data);
  CHECK(a.Ws.data == b.Ws.data);
  CHECK(a.polarity == Polarity::negative);
  const SwitchingModel c = make_switching_model(background, 43, Polarity::negative);
  CHECK(a.Ws.data != c.Ws.data);
}
