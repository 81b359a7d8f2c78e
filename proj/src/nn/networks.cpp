#include "caps/nn/networks.hpp"

#include <numbers>
#include <stdexcept>

namespace caps::nn {

void ArchConfig::validate() const {
  if (convs.empty()) throw std::invalid_argument("arch.convs must not be empty");
  for (const auto& c : convs)
    if (c.channels < 1 || c.kernel < 1 || c.stride < 1)
      throw std::invalid_argument("arch.convs entries need positive channels, kernel and stride");
  if (hidden < 1) throw std::invalid_argument("arch.hidden must be positive");
  if (!(policy_head_scale > 0.0) || !std::isfinite(policy_head_scale))
    throw std::invalid_argument("arch.policy_head_scale must be positive");
}

double squashed_log_prob(const PolicyOutput& out, const std::array<double, kActionDims>& u) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double lp = 0.0;
  for (std::size_t i = 0; i < kActionDims; ++i) {
    const double sd = std::exp(out.log_std[i]);
    const double z = (u[i] - out.mean[i]) / sd;
    lp += -0.5 * z * z - out.log_std[i] - half_log_2pi - log1m_tanh_sq(u[i]);
  }
  return lp;
}

SquashedDraw squashed_draw(const PolicyOutput& out, const std::array<double, kActionDims>& eps) {
  SquashedDraw d;
  d.eps = eps;
  for (std::size_t i = 0; i < kActionDims; ++i) {
    d.std_dev[i] = std::exp(out.log_std[i]);
    d.pre[i] = out.mean[i] + d.std_dev[i] * eps[i];
    d.action[i] = std::tanh(d.pre[i]);
  }
  d.log_prob = squashed_log_prob(out, d.pre);
  return d;
}

ActionSample sample_action(const PolicyOutput& out, Rng* rng) {
  for (std::size_t i = 0; i < kActionDims; ++i)
    if (!std::isfinite(out.mean[i]) || !std::isfinite(out.log_std[i]))
      throw NumericError("policy output is not finite");
  ActionSample s;
  if (!rng) {
    for (std::size_t i = 0; i < kActionDims; ++i) s.action[i] = std::tanh(out.mean[i]);
    return s;
  }
  std::array<double, kActionDims> eps{};
  for (auto& e : eps) e = rng->normal();
  const SquashedDraw d = squashed_draw(out, eps);
  s.action = d.action;
  s.log_prob = d.log_prob;
  return s;
}

}  // namespace caps::nn
