#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spikegate/lif.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace spikegate;
using testing::TensorD;

using oracle::ScalarTrace;
using oracle::scalar_lif;

TEST_CASE("hand trace") {
  const LifParams p;
  CHECK(p.tau == 0.5);
  CHECK(p.u_th == 0.75);
  auto state = LifState::zeros({1});
  const float inputs[3] = {0.5f, 0.6f, 0.3f};
  const float want_s[3] = {0, 1, 0};
  const float want_h[3] = {0.25f, 0.0f, 0.15f};
  for (int t = 0; t < 3; ++t) {
    auto r = lif_step(state, Tensor::from_values({1}, {inputs[t]}), p);
    CHECK(r.spikes[0] == want_s[t]);
    CHECK(r.state.h[0] == want_h[t]);
    state = r.state;
  }
  const Tensor train = lif_forward(Tensor::from_values({3, 1}, {0.5f, 0.6f, 0.3f}), p);
  CHECK(train[0] == 0.0f);
  CHECK(train[1] == 1.0f);
  CHECK(train[2] == 0.0f);
}

TEST_CASE("quiescence and saturation") {
  const LifParams p;
  CHECK(lif_forward(Tensor::zeros({5, 2, 3}), p).values().isZero());
  auto state = LifState::zeros({4});
  for (int t = 0; t < 6; ++t) {
    auto r = lif_step(state, Tensor::full({4}, 10.0f), p);
    CHECK(r.spikes.values().isOnes());
    CHECK(r.state.h.values().isZero());
    state = r.state;
  }
}

TEST_CASE("constant drive") {
  // U: 0.4, 0.6, 0.7, 0.75 (fires), then the cycle restarts from 0.
  const LifParams p;
  std::vector<float> in(8, 0.4f);
  const Tensor x({8, 1}, Eigen::Map<const Tensor::Vector>(in.data(), 8));
  const Tensor s = lif_forward(x, p);
  const ScalarTrace tr = scalar_lif(in, 0.5f, 0.75f, 0.0f);
  CHECK(tr.u[1] == doctest::Approx(0.6));
  CHECK(tr.u[2] == doctest::Approx(0.7));
  CHECK(tr.u[3] == doctest::Approx(0.75));
  for (int t = 0; t < 8; ++t) CHECK(s[t] == tr.s[static_cast<std::size_t>(t)]);
  CHECK(s.values().sum() == 2.0f);
  CHECK(s[3] == 1.0f);
  CHECK(s[7] == 1.0f);
}

TEST_CASE("T = 1 equals one step") {
  Rng rng(4);
  const Tensor x = cast<float>(testing::uniform({1, 2, 3}, rng, -1, 2, false));
  const LifParams p;
  const auto step = lif_step(LifState::zeros({2, 3}), reshape(x, {2, 3}), p);
  CHECK(lif_forward(x, p).values() == step.spikes.values());
}

TEST_CASE("1000 random traces against the scalar recurrence") {
  Rng rng(2024);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::uniform_int_distribution<int> steps(1, 16);
  for (int trial = 0; trial < 1000; ++trial) {
    LifParams p;
    p.tau = unit(rng);
    p.u_th = 0.1 + 1.9 * unit(rng);
    p.u_reset = trial % 2 == 0 ? 0.0 : -0.5 * unit(rng);
    const float tau = static_cast<float>(p.tau), th = static_cast<float>(p.u_th);
    const float reset = static_cast<float>(p.u_reset);
    const int t_len = steps(rng);
    const Index neurons = 3;
    Tensor::Vector v(t_len * neurons);
    for (Index i = 0; i < v.size(); ++i) v[i] = -0.5f + 2.0f * unit(rng);
    const Tensor x({t_len, neurons}, v);
    const Tensor s = lif_forward(x, p);
    auto state = LifState::zeros({neurons});
    for (Index n = 0; n < neurons; ++n) {
      std::vector<float> current;
      for (int t = 0; t < t_len; ++t) current.push_back(v[t * neurons + n]);
      const ScalarTrace tr = scalar_lif(current, tau, th, reset);
      for (int t = 0; t < t_len; ++t) {
        if (s[t * neurons + n] != tr.s[static_cast<std::size_t>(t)]) {
          FAIL("trace " << trial << " neuron " << n << " step " << t);
        }
      }
    }
    for (int t = 0; t < t_len; ++t) {
      Tensor::Vector slice = v.segment(t * neurons, neurons);
      auto r = lif_step(state, Tensor({neurons}, slice), p);
      for (Index n = 0; n < neurons; ++n) {
        std::vector<float> current;
        for (int k = 0; k <= t; ++k) current.push_back(v[k * neurons + n]);
        const ScalarTrace tr = scalar_lif(current, tau, th, reset);
        REQUIRE(r.state.h[n] == tr.h.back());
        REQUIRE(r.spikes[n] == tr.s.back());
        if (r.spikes[n] == 1.0f) REQUIRE(r.state.h[n] == reset);
      }
      state = r.state;
    }
  }
}

TEST_CASE("binarity and monotonicity") {
  const LifParams p;
  REQUIRE(p.u_reset <= p.tau * p.u_th);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const Tensor x = cast<float>(testing::uniform({6, 20}, rng, -0.5, 1.5, false));
    const Tensor bump = cast<float>(testing::uniform({6, 20}, rng, 0.0, 0.5, false));
    const Tensor s1 = lif_forward(x, p);
    const Tensor s2 = lif_forward(add(x, bump), p);
    CHECK(is_binary(s1));
    for (Index n = 0; n < 20; ++n) {
      float c1 = 0, c2 = 0;
      for (Index t = 0; t < 6; ++t) {
        c1 += s1[t * 20 + n];
        c2 += s2[t * 20 + n];
        CHECK(c2 >= c1);
      }
    }
  }
}

TEST_CASE("surrogate window") {
  for (double a : {0.25, 1.0, 3.0}) {
    CHECK(surrogate_gradient(0.0, a) == 1.0 / a);
    CHECK(surrogate_gradient(a, a) == 0.0);
    CHECK(surrogate_gradient(-a, a) == 0.0);
    const int n = 200000;
    const double lo = -2 * a, step = 4 * a / n;
    double integral = 0;
    for (int i = 0; i < n; ++i) integral += surrogate_gradient(lo + (i + 0.5) * step, a) * step;
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-4));
  }
  const TensorD d = TensorD::from_values({3}, {0.0, 0.4, 0.6});
  const TensorD g = heaviside_surrogate_backward(d, 1.0);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 1.0);
  CHECK(g[2] == 0.0);
}

TEST_CASE("BPTT through the surrogate, finite differences on 10 seeds") {
  LifParams p;
  p.spike_fn = SpikeFunction::linear_ramp;
  for (double tau : {0.5, 0.9}) {
    p.tau = tau;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CAPTURE(seed);
      Rng rng(seed);
      const auto r = testing::grad_check(
          [&](const std::vector<TensorD>& v) { return testing::weighted_sum(lif_forward(v[0], p)); },
          {testing::uniform({5, 3, 4}, rng, -0.2, 1.2)});
      CHECK(r.passes());
    }
  }
}

TEST_CASE("heaviside backward uses the rectangular window") {
  // One neuron, one step: dS/dI equals the surrogate at U - u_th.
  const LifParams p;
  for (double i : {0.3, 0.5, 0.75, 1.0, 1.3}) {
    TensorD x = TensorD::from_values({1, 1}, {i}).set_requires_grad(true);
    testing::TapeD tape;
    testing::TapeScopeD scope(tape);
    backward(tape, sum(lif_forward(x, p)));
    CHECK(x.grad()[0] == surrogate_gradient(i - 0.75, 1.0));
  }
}

TEST_CASE("parameter and shape validation") {
  LifParams bad;
  bad.tau = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = LifParams{};
  bad.u_reset = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = LifParams{};
  bad.surrogate_width = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  const LifParams p;
  CHECK_THROWS_AS(lif_step(LifState::zeros({2}), Tensor::zeros({3}), p), ShapeError);
  CHECK_THROWS_AS(lif_forward(Tensor::zeros({0, 3}), p), ShapeError);
  CHECK_THROWS_AS(lif_forward(Tensor::from_values({1, 1}, {std::nanf("")}), p), NumericError);
}
