#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "caps/nn/networks.hpp"
#include "caps/util/errors.hpp"
#include "support/oracles.hpp"

using namespace caps;
using namespace caps::nn;

namespace {

constexpr double kStep = 1e-6;
constexpr double kFloor = 1e-6;
constexpr double kTol = 1e-4;

Batch<double> random_batch(Rng& rng, int rows, int cols, double scale = 1.0) {
  Batch<double> b(rows, cols);
  for (auto& v : b.data) v = rng.uniform(-scale, scale);
  return b;
}

double weighted_sum(const Batch<double>& y, const Batch<double>& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * c.data[i];
  return s;
}

// Compares `analytic` with central differences of `loss` over up to `per_array` entries of each array.
void check_param_grads(ParamSet<double>& params, const ParamSet<double>& analytic, const std::function<double()>& loss,
                       Rng& rng, int per_array = 25) {
  std::vector<double> a, n;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& vals = params[i].values;
    const int count = std::min<int>(per_array, static_cast<int>(vals.size()));
    for (int k = 0; k < count; ++k) {
      const std::size_t idx = count == static_cast<int>(vals.size()) ? static_cast<std::size_t>(k) : rng.index(vals.size());
      a.push_back(analytic[i].values[idx]);
      n.push_back(oracle::central_difference(vals[idx], kStep, loss));
    }
  }
  EXPECT_LE(oracle::max_relative_error(a, n, kFloor), kTol);
}

void check_input_grads(Batch<double>& x, const Batch<double>& analytic, const std::function<double()>& loss, Rng& rng,
                       int samples = 60) {
  std::vector<double> a, n;
  for (int k = 0; k < samples; ++k) {
    const std::size_t idx = rng.index(x.data.size());
    a.push_back(analytic.data[idx]);
    n.push_back(oracle::central_difference(x.data[idx], kStep, loss));
  }
  EXPECT_LE(oracle::max_relative_error(a, n, kFloor), kTol);
}

StackedObs stack_of(Rng& rng, int h, int w) { return oracle::random_stack(rng, h, w); }

const ArchConfig kSmallArch{{{4, 3, 2}, {5, 2, 1}}, 8, 0.5};

}  // namespace

TEST(GradientCheck, Conv2dRandomShapes) {
  Rng rng(21);
  for (int trial = 0; trial < 6; ++trial) {
    const Shape3 in{1 + static_cast<int>(rng.index(3)), 5 + static_cast<int>(rng.index(5)), 5 + static_cast<int>(rng.index(5))};
    const int k = 2 + static_cast<int>(rng.index(2)), s = 1 + static_cast<int>(rng.index(2));
    ParamSet<double> params;
    Conv2d<double> conv(in, 1 + static_cast<int>(rng.index(3)), k, s, params, "conv");
    conv.init(params, rng, 1.0);
    Batch<double> x = random_batch(rng, 2, in.size());
    Batch<double> y;
    conv.forward(params, x, y);
    const Batch<double> c = random_batch(rng, y.rows, y.cols);
    auto loss = [&] {
      Batch<double> out;
      conv.forward(params, x, out);
      return weighted_sum(out, c);
    };
    ParamSet<double> grads = params.zeros_like();
    Batch<double> dx;
    conv.backward(params, x, c, &dx, &grads);
    check_param_grads(params, grads, loss, rng);
    check_input_grads(x, dx, loss, rng);
  }
}

TEST(GradientCheck, DenseRandomShapes) {
  Rng rng(22);
  for (int trial = 0; trial < 6; ++trial) {
    const int in = 1 + static_cast<int>(rng.index(12)), out = 1 + static_cast<int>(rng.index(6));
    ParamSet<double> params;
    Dense<double> dense(in, out, params, "fc");
    dense.init(params, rng, 1.0);
    Batch<double> x = random_batch(rng, 3, in);
    const Batch<double> c = random_batch(rng, 3, out);
    auto loss = [&] {
      Batch<double> y;
      dense.forward(params, x, y);
      return weighted_sum(y, c);
    };
    ParamSet<double> grads = params.zeros_like();
    Batch<double> dx;
    dense.backward(params, x, c, &dx, &grads);
    check_param_grads(params, grads, loss, rng);
    check_input_grads(x, dx, loss, rng, 20);
  }
}

TEST(GradientCheck, Relu) {
  Rng rng(23);
  Relu relu("relu");
  Batch<double> x = random_batch(rng, 4, 9);
  for (auto& v : x.data)
    if (std::fabs(v) < 1e-3) v = 0.5;  // keep probes away from the kink
  const Batch<double> c = random_batch(rng, 4, 9);
  auto loss = [&] {
    Batch<double> y;
    relu.forward(x, y);
    return weighted_sum(y, c);
  };
  Batch<double> y, dx;
  relu.forward(x, y);
  relu.backward(y, c, dx);
  check_input_grads(x, dx, loss, rng, 36);
}

TEST(GradientCheck, PolicyGraphThroughSquashedSample) {
  Rng rng(24);
  const Shape3 in{6, 9, 11};
  PolicyNet<double> policy(in, kSmallArch);
  policy.init(rng);
  std::vector<StackedObs> obs;
  for (int i = 0; i < 3; ++i) obs.push_back(stack_of(rng, in.height, in.width));
  std::vector<const StackedObs*> ptrs;
  for (auto& o : obs) ptrs.push_back(&o);
  const Batch<double> x = make_input<double>(ptrs, in);
  std::vector<std::array<double, 2>> eps;
  for (int i = 0; i < 3; ++i) eps.push_back({rng.normal(), rng.normal()});
  // loss = sum_r (a_r . w + log_prob_r): exercises mean, log_std and the tanh correction
  const std::array<double, 2> w{0.7, -1.3};
  auto loss = [&] {
    const Batch<double> raw = policy.forward(x, nullptr);
    double s = 0;
    for (int r = 0; r < raw.rows; ++r) {
      const auto d = squashed_draw(PolicyNet<double>::row_output(raw, r), eps[static_cast<std::size_t>(r)]);
      s += d.action[0] * w[0] + d.action[1] * w[1] + d.log_prob;
    }
    return s;
  };
  PolicyNet<double>::Tape tape;
  const Batch<double> raw = policy.forward(x, &tape);
  Batch<double> d_raw(raw.rows, raw.cols);
  for (int r = 0; r < raw.rows; ++r) {
    const auto d = squashed_draw(PolicyNet<double>::row_output(raw, r), eps[static_cast<std::size_t>(r)]);
    for (int i = 0; i < 2; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double a = d.action[k];
      // with eps fixed: d log_prob/du = 2a, du/dmean = 1, du/dlog_std = std eps, and -1 directly in log_std
      const double d_u = w[k] * (1 - a * a) + 2.0 * a;
      d_raw(r, i) = d_u;
      d_raw(r, 2 + i) = d_u * d.std_dev[k] * d.eps[k] - 1.0;
    }
  }
  ParamSet<double> grads = policy.params.zeros_like();
  policy.backward(tape, d_raw, grads);
  check_param_grads(policy.params, grads, loss, rng);
}

TEST(GradientCheck, CriticGraphWithSharedEncoder) {
  Rng rng(25);
  const Shape3 in{6, 8, 10};
  CriticNet<double> critic(in, kSmallArch, "critic");
  critic.init(rng);
  std::vector<StackedObs> obs;
  for (int i = 0; i < 4; ++i) obs.push_back(stack_of(rng, in.height, in.width));
  std::vector<const StackedObs*> ptrs;
  for (auto& o : obs) ptrs.push_back(&o);
  const Batch<double> x = make_input<double>(ptrs, in);
  Batch<double> a1 = random_batch(rng, 4, 2), a2 = random_batch(rng, 4, 2);
  const Batch<double> c1 = random_batch(rng, 4, 1), c2 = random_batch(rng, 4, 1);
  // one encoding, two head evaluations, as the learner does
  auto loss = [&] {
    const Batch<double> f = critic.encode(x, nullptr);
    return weighted_sum(critic.head(f, a1, nullptr), c1) + weighted_sum(critic.head(f, a2, nullptr), c2);
  };
  CriticNet<double>::Tape enc, h1, h2;
  const Batch<double> f = critic.encode(x, &enc);
  critic.head(f, a1, &h1);
  critic.head(f, a2, &h2);
  ParamSet<double> grads = critic.params.zeros_like();
  Batch<double> d1 = critic.head_backward(h1, c1, &grads);
  const Batch<double> d2 = critic.head_backward(h2, c2, &grads);
  for (std::size_t i = 0; i < d1.data.size(); ++i) d1.data[i] += d2.data[i];
  critic.encode_backward(enc, d1, grads);
  check_param_grads(critic.params, grads, loss, rng);

  // action gradient from the concatenated-input gradient
  std::vector<double> an, nu;
  for (int r = 0; r < 4; ++r)
    for (int i = 0; i < 2; ++i) {
      an.push_back(d1(r, critic.feature_size() + i) - d2(r, critic.feature_size() + i));
      nu.push_back(oracle::central_difference(a1(r, i), kStep, loss));
    }
  EXPECT_LE(oracle::max_relative_error(an, nu, kFloor), kTol);
}

TEST(Networks, PaperScaleInputAccepted) {
  const Shape3 in{6, 120, 160};
  PolicyNet<float> policy(in, ArchConfig{});
  EXPECT_EQ(policy.input_shape(), in);
  Rng rng(1);
  policy.init(rng);
  const StackedObs obs = stack_of(rng, 120, 160);
  EXPECT_NO_THROW(policy.forward_one(obs));
  EXPECT_THROW(policy.forward_one(stack_of(rng, 40, 56)), ShapeError);
}

TEST(Networks, SeededBuildsAreIdenticalAndTargetsCopyCritics) {
  auto a = build_networks<float>(40, 56, ArchConfig{}, 5);
  auto b = build_networks<float>(40, 56, ArchConfig{}, 5);
  EXPECT_TRUE(a.policy.params == b.policy.params);
  EXPECT_TRUE(a.critic1.params == b.critic1.params);
  EXPECT_TRUE(a.target1.params == a.critic1.params);
  EXPECT_TRUE(a.target2.params == a.critic2.params);
  EXPECT_FALSE(a.critic1.params[0].values == a.critic2.params[0].values);
  auto c = build_networks<float>(40, 56, ArchConfig{}, 6);
  EXPECT_FALSE(c.policy.params == a.policy.params);
}

TEST(Networks, DefaultFeatureSizeAtDeskScale) {
  CriticNet<float> critic({6, 40, 56}, ArchConfig{}, "c");
  EXPECT_EQ(critic.feature_size(), 96);
}

TEST(Networks, TooSmallInputIsShapeError) {
  EXPECT_THROW(PolicyNet<float>({6, 10, 10}, ArchConfig{}), ShapeError);
}

TEST(Policy, DeterministicZeroMeanGivesZeroAction) {
  PolicyOutput out;
  const ActionSample s = sample_action(out, nullptr);
  EXPECT_EQ(s.action[0], 0.0);
  EXPECT_EQ(s.action[1], 0.0);
  EXPECT_FALSE(s.log_prob.has_value());
}

TEST(Policy, SamplesStayInBoundsWithFiniteLogProb) {
  Rng rng(26);
  for (int i = 0; i < 20000; ++i) {
    PolicyOutput out;
    out.mean = {rng.uniform(-30, 30), rng.uniform(-30, 30)};
    out.log_std = {clamp_log_std(rng.uniform(-30, 5)), clamp_log_std(rng.uniform(-30, 5))};
    const ActionSample s = sample_action(out, &rng);
    ASSERT_LE(std::fabs(s.action[0]), 1.0);
    ASSERT_LE(std::fabs(s.action[1]), 1.0);
    ASSERT_TRUE(s.log_prob && std::isfinite(*s.log_prob));
  }
}

TEST(Policy, LogStdIsClamped) {
  EXPECT_EQ(clamp_log_std(-50.0), kLogStdMin);
  EXPECT_EQ(clamp_log_std(9.0), kLogStdMax);
  EXPECT_EQ(clamp_log_std(0.25), 0.25);
}

TEST(Policy, StableTanhCorrectionMatchesDirectForm) {
  for (double u = -8.0; u <= 8.0; u += 0.37) EXPECT_NEAR(log1m_tanh_sq(u), std::log(1 - std::tanh(u) * std::tanh(u)), 1e-9);
  EXPECT_TRUE(std::isfinite(log1m_tanh_sq(400.0)));
  EXPECT_TRUE(std::isfinite(log1m_tanh_sq(-400.0)));
}

TEST(Policy, SquashedDensityIntegratesToOne) {
  // 1-D marginal: integrate exp(log density of dim 0) over a in (-1, 1) via u = atanh(a).
  // The second dimension is held at u = mean, so its density factor is divided out.
  for (const auto& [mean, log_std] : std::vector<std::pair<double, double>>{{0.0, 0.0}, {0.8, -0.7}, {-1.5, 0.4}}) {
    PolicyOutput out;
    out.mean = {mean, 0.0};
    out.log_std = {log_std, 0.0};
    // second dimension: N(0, 1) at u = 0, no tanh correction at 0
    const double log_second = -0.5 * std::log(2 * std::numbers::pi);
    double integral = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double a = -1.0 + (i + 0.5) * (2.0 / n);
      const double u = std::atanh(a);
      integral += std::exp(squashed_log_prob(out, {u, 0.0}) - log_second) * (2.0 / n);
    }
    EXPECT_NEAR(integral, 1.0, 1e-3) << mean << "," << log_std;
  }
}

TEST(Critic, ZeroFinalLayerOutputsItsBias) {
  Rng rng(27);
  CriticNet<float> critic({6, 20, 24}, kSmallArch, "c");
  critic.init(rng);
  const auto& q = critic.output_layer();
  std::fill(critic.params[q.weight_index()].values.begin(), critic.params[q.weight_index()].values.end(), 0.0f);
  critic.params[q.bias_index()].values[0] = 0.375f;
  for (int i = 0; i < 5; ++i) {
    const StackedObs obs = stack_of(rng, 20, 24);
    const Batch<float> x = make_input<float>({&obs}, {6, 20, 24});
    Batch<float> a(1, 2);
    a(0, 0) = static_cast<float>(rng.uniform(-1, 1));
    EXPECT_EQ(critic.forward(x, a)(0, 0), 0.375f);
  }
}

TEST(Critic, LipschitzInAction) {
  Rng rng(28);
  CriticNet<double> critic({6, 12, 12}, kSmallArch, "c");
  critic.init(rng);
  const StackedObs obs = stack_of(rng, 12, 12);
  const Batch<double> f = critic.encode(make_input<double>({&obs}, {6, 12, 12}), nullptr);
  // bound from the weight norms of the head: L <= ||W_q|| * ||W_fc[:, action cols]||
  const auto& params = critic.params;
  const auto fc_w = params.find("c.fc.weight");
  const auto q_w = params.find("c.q.weight");
  double fc_norm = 0, q_norm = 0;
  const int in_cols = critic.feature_size() + 2;
  for (int o = 0; o < kSmallArch.hidden; ++o)
    for (int c = critic.feature_size(); c < in_cols; ++c) fc_norm += std::pow(params[*fc_w].values[static_cast<std::size_t>(o * in_cols + c)], 2);
  for (double v : params[*q_w].values) q_norm += v * v;
  const double lipschitz = std::sqrt(fc_norm) * std::sqrt(q_norm);
  for (int i = 0; i < 100; ++i) {
    Batch<double> a(1, 2), b(1, 2);
    a(0, 0) = rng.uniform(-1, 1);
    a(0, 1) = rng.uniform(-1, 1);
    b(0, 0) = a(0, 0) + rng.uniform(-0.1, 0.1);
    b(0, 1) = a(0, 1) + rng.uniform(-0.1, 0.1);
    const double dq = std::fabs(critic.head(f, a, nullptr)(0, 0) - critic.head(f, b, nullptr)(0, 0));
    EXPECT_LE(dq, lipschitz * std::hypot(a(0, 0) - b(0, 0), a(0, 1) - b(0, 1)) + 1e-12);
  }
}

TEST(Sequential, NonFiniteActivationNamesTheLayer) {
  ParamSet<double> params;
  Sequential<double> net;
  net.push(Dense<double>(2, 2, params, "first"));
  net.push(Relu("act"));
  Batch<double> x(1, 2);
  x(0, 0) = std::numeric_limits<double>::infinity();
  params[0].values.assign(4, 1.0);
  try {
    net.forward(params, x, nullptr);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("first"), std::string::npos);
  }
}

TEST(Optimizer, SingleWeightLossHasUnitGradient) {
  ParamSet<double> params;
  Dense<double> dense(3, 1, params, "fc");
  Rng rng(29);
  dense.init(params, rng, 1.0);
  // loss = w[0][1]: a dense layer's weight gradient is dy * x, so feed x = e_1 and dy = 1
  Batch<double> x(1, 3);
  x(0, 1) = 1.0;
  Batch<double> dy(1, 1, 1.0);
  ParamSet<double> grads = params.zeros_like();
  dense.backward(params, x, dy, nullptr, &grads);
  const std::vector<double> expect{0.0, 1.0, 0.0};
  EXPECT_EQ(grads[dense.weight_index()].values, expect);
}

TEST(Optimizer, AdamRejectsNonFiniteGradientNamingParameter) {
  ParamSet<float> p;
  p.add("layer.weight", {2});
  Adam<float> opt(p, {});
  ParamSet<float> g = p.zeros_like();
  g[0].values[1] = std::nanf("");
  try {
    opt.step(p, g);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
  }
  EXPECT_EQ(opt.steps(), 0);
}

TEST(Optimizer, IdenticalUpdatesGiveIdenticalParameters) {
  auto run = [] {
    Rng rng(30);
    ParamSet<float> p;
    p.add("w", {64});
    for (auto& v : p[0].values) v = static_cast<float>(rng.uniform(-1, 1));
    Adam<float> opt(p, {});
    for (int i = 0; i < 10; ++i) {
      ParamSet<float> g = p.zeros_like();
      for (auto& v : g[0].values) v = static_cast<float>(rng.normal());
      opt.step(p, g);
    }
    return p;
  };
  EXPECT_TRUE(run() == run());
}

TEST(SoftUpdate, Examples) {
  ParamSet<double> target, online;
  target.add("w", {3});
  online.add("w", {3});
  online.fill(2.0);
  auto t = target;
  soft_update(t, online, 0.5);
  for (double v : t[0].values) EXPECT_EQ(v, 1.0);
  t = target;
  soft_update(t, online, 0.0);
  EXPECT_TRUE(t == target);
  soft_update(t, online, 1.0);
  EXPECT_TRUE(t == online);
  ParamSet<double> other;
  other.add("w", {4});
  EXPECT_THROW(soft_update(t, other, 0.1), ShapeError);
}
