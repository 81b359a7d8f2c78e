#pragma once

// Policy and twin-critic networks over stacked camera observations.

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "caps/nn/layers.hpp"
#include "caps/util/image.hpp"
#include "caps/util/rng.hpp"

namespace caps::nn {

inline constexpr int kActionDims = 2;
inline constexpr int kStackChannels = 6;
inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct ConvSpec {
  int channels = 16;
  int kernel = 8;
  int stride = 4;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct ArchConfig {
  std::vector<ConvSpec> convs{{16, 8, 4}, {32, 4, 2}, {32, 3, 1}};
  int hidden = 256;
  double policy_head_scale = 0.01;
  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;

  void validate() const;
};

// Writes one stacked observation as CHW floats in [0, 1]:
// channels 0..2 previous RGB, 3..5 current RGB.
template <class T>
void stacked_to_input(const StackedObs& obs, T* dst) {
  const Image* frames[2] = {obs.previous.get(), obs.current.get()};
  const int h = frames[1]->height, w = frames[1]->width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int f = 0; f < 2; ++f) {
    const Image& img = *frames[f];
    if (img.height != h || img.width != w || img.channels != 3) throw ShapeError("stacked frames differ in shape");
    for (std::size_t p = 0; p < plane; ++p)
      for (int c = 0; c < 3; ++c)
        dst[(f * 3 + c) * plane + p] = static_cast<T>(img.pixels[p * 3 + c]) / T(255);
  }
}

template <class T>
Batch<T> make_input(const std::vector<const StackedObs*>& batch, Shape3 shape) {
  Batch<T> x(static_cast<int>(batch.size()), shape.size());
  for (int i = 0; i < x.rows; ++i) {
    const Image& cur = *batch[static_cast<std::size_t>(i)]->current;
    if (cur.height != shape.height || cur.width != shape.width)
      throw ShapeError("observation " + std::to_string(cur.height) + "x" + std::to_string(cur.width) +
                       " does not match network input " + std::to_string(shape.height) + "x" +
                       std::to_string(shape.width));
    stacked_to_input(*batch[static_cast<std::size_t>(i)], x.row(i));
  }
  return x;
}

// log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
inline double log1m_tanh_sq(double u) {
  const double z = -2.0 * u;
  const double softplus = z > 30.0 ? z : std::log1p(std::exp(z));
  return 2.0 * (std::log(2.0) - u - softplus);
}

inline double clamp_log_std(double raw) { return raw < kLogStdMin ? kLogStdMin : (raw > kLogStdMax ? kLogStdMax : raw); }

struct PolicyOutput {
  std::array<double, kActionDims> mean{};
  std::array<double, kActionDims> log_std{};
};

struct ActionSample {
  std::array<double, kActionDims> action{};
  std::optional<double> log_prob;
};

// Squashed-Gaussian draw for one row given standard-normal noise eps.
struct SquashedDraw {
  std::array<double, kActionDims> pre{};     // u = mean + std * eps
  std::array<double, kActionDims> action{};  // tanh(u)
  std::array<double, kActionDims> eps{};
  std::array<double, kActionDims> std_dev{};
  double log_prob = 0.0;
};

SquashedDraw squashed_draw(const PolicyOutput& out, const std::array<double, kActionDims>& eps);

// Log-density of the squashed Gaussian at pre-squash value u.
double squashed_log_prob(const PolicyOutput& out, const std::array<double, kActionDims>& u);

ActionSample sample_action(const PolicyOutput& out, Rng* rng);

template <class T>
class PolicyNet {
 public:
  using Tape = typename Sequential<T>::Tape;

  PolicyNet() = default;
  PolicyNet(Shape3 input, const ArchConfig& arch) : input_(input), arch_(arch) {
    arch.validate();
    if (input.channels != kStackChannels) throw ShapeError("policy input must have 6 channels");
    Shape3 s = input;
    int idx = 0;
    for (const ConvSpec& c : arch.convs) {
      Conv2d<T> conv(s, c.channels, c.kernel, c.stride, params, "policy.conv" + std::to_string(idx));
      s = conv.output_shape();
      net_.push(std::move(conv));
      net_.push(Relu("policy.relu" + std::to_string(idx)));
      ++idx;
    }
    net_.push(Dense<T>(s.size(), arch.hidden, params, "policy.fc"));
    net_.push(Relu("policy.fc_relu"));
    net_.push(Dense<T>(arch.hidden, 2 * kActionDims, params, "policy.head"));
  }

  Shape3 input_shape() const { return input_; }
  const ArchConfig& arch() const { return arch_; }

  void init(Rng& rng) {
    net_.init(params, rng);
    const auto& head = std::get<Dense<T>>(net_[net_.size() - 1]);
    for (auto idx : {head.weight_index(), head.bias_index()})
      for (auto& v : params[idx].values) v = static_cast<T>(v * arch_.policy_head_scale);
  }

  // Raw head output: columns [0, A) mean, [A, 2A) unclamped log_std.
  Batch<T> forward(const Batch<T>& x, Tape* tape) const { return net_.forward(params, x, tape); }

  void backward(const Tape& tape, const Batch<T>& d_out, ParamSet<T>& grads) const {
    net_.backward(params, tape, d_out, &grads, false);
  }

  static PolicyOutput row_output(const Batch<T>& raw, int r) {
    PolicyOutput o;
    for (int i = 0; i < kActionDims; ++i) {
      o.mean[static_cast<std::size_t>(i)] = static_cast<double>(raw(r, i));
      o.log_std[static_cast<std::size_t>(i)] = clamp_log_std(static_cast<double>(raw(r, kActionDims + i)));
    }
    return o;
  }

  PolicyOutput forward_one(const StackedObs& obs) const {
    Batch<T> x(1, input_.size());
    if (obs.current->height != input_.height || obs.current->width != input_.width)
      throw ShapeError("observation does not match policy input shape");
    stacked_to_input(obs, x.row(0));
    return row_output(forward(x, nullptr), 0);
  }

  ParamSet<T> params;

 private:
  Shape3 input_;
  ArchConfig arch_;
  Sequential<T> net_;
};

template <class T>
class CriticNet {
 public:
  using Tape = typename Sequential<T>::Tape;

  CriticNet() = default;
  CriticNet(Shape3 input, const ArchConfig& arch, const std::string& prefix) : input_(input) {
    arch.validate();
    if (input.channels != kStackChannels) throw ShapeError("critic input must have 6 channels");
    Shape3 s = input;
    int idx = 0;
    for (const ConvSpec& c : arch.convs) {
      Conv2d<T> conv(s, c.channels, c.kernel, c.stride, params, prefix + ".conv" + std::to_string(idx));
      s = conv.output_shape();
      encoder_.push(std::move(conv));
      encoder_.push(Relu(prefix + ".relu" + std::to_string(idx)));
      ++idx;
    }
    features_ = s.size();
    head_.push(Dense<T>(features_ + kActionDims, arch.hidden, params, prefix + ".fc"));
    head_.push(Relu(prefix + ".fc_relu"));
    head_.push(Dense<T>(arch.hidden, 1, params, prefix + ".q"));
  }

  Shape3 input_shape() const { return input_; }
  int feature_size() const { return features_; }

  void init(Rng& rng) {
    encoder_.init(params, rng);
    head_.init(params, rng);
  }

  const Dense<T>& output_layer() const { return std::get<Dense<T>>(head_[head_.size() - 1]); }

  Batch<T> encode(const Batch<T>& x, Tape* tape) const { return encoder_.forward(params, x, tape); }

  // features (N x F) concatenated with actions (N x A) -> q (N x 1)
  Batch<T> head(const Batch<T>& features, const Batch<T>& actions, Tape* tape) const {
    if (features.rows != actions.rows || actions.cols != kActionDims)
      throw ShapeError("critic head: feature/action batch mismatch");
    Batch<T> cat(features.rows, features_ + kActionDims);
    for (int r = 0; r < cat.rows; ++r) {
      std::copy(features.row(r), features.row(r) + features_, cat.row(r));
      std::copy(actions.row(r), actions.row(r) + kActionDims, cat.row(r) + features_);
    }
    return head_.forward(params, std::move(cat), tape);
  }

  Batch<T> forward(const Batch<T>& x, const Batch<T>& actions) const { return head(encode(x, nullptr), actions, nullptr); }

  // Returns d(loss)/d(concatenated input); columns [F, F + A) are the action gradient.
  // Parameter gradients accumulate into grads when non-null.
  Batch<T> head_backward(const Tape& tape, const Batch<T>& dq, ParamSet<T>* grads) const {
    return head_.backward(params, tape, dq, grads, true);
  }

  void encode_backward(const Tape& tape, const Batch<T>& d_cat, ParamSet<T>& grads) const {
    Batch<T> d_feat(d_cat.rows, features_);
    for (int r = 0; r < d_cat.rows; ++r) std::copy(d_cat.row(r), d_cat.row(r) + features_, d_feat.row(r));
    encoder_.backward(params, tape, std::move(d_feat), &grads, false);
  }

  ParamSet<T> params;

 private:
  Shape3 input_;
  int features_ = 0;
  Sequential<T> encoder_;
  Sequential<T> head_;
};

template <class T>
struct Networks {
  PolicyNet<T> policy;
  CriticNet<T> critic1;
  CriticNet<T> critic2;
  CriticNet<T> target1;
  CriticNet<T> target2;
};

template <class T>
Networks<T> build_networks(int height, int width, const ArchConfig& arch, std::uint64_t seed) {
  const Shape3 input{kStackChannels, height, width};
  Rng rng(seed);
  Rng policy_rng = rng.split();
  Rng c1_rng = rng.split();
  Rng c2_rng = rng.split();
  Networks<T> n{PolicyNet<T>(input, arch), CriticNet<T>(input, arch, "critic1"), CriticNet<T>(input, arch, "critic2"),
                {}, {}};
  n.policy.init(policy_rng);
  n.critic1.init(c1_rng);
  n.critic2.init(c2_rng);
  n.target1 = n.critic1;
  n.target2 = n.critic2;
  return n;
}

// FNV-1a over parameter names and shapes.
template <class T>
std::uint64_t layout_hash(const ParamSet<T>& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& a : params) {
    mix(a.name);
    for (int d : a.shape) mix(":" + std::to_string(d));
    mix(";");
  }
  return h;
}

}  // namespace caps::nn
