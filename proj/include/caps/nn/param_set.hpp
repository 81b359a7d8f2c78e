#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "caps/kernels/kernels.hpp"
#include "caps/util/errors.hpp"

namespace caps::nn {

inline std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

template <class T>
struct ParamArray {
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;

  friend bool operator==(const ParamArray&, const ParamArray&) = default;
};

// Ordered named parameter arrays. Shapes are fixed once added.
template <class T>
class ParamSet {
 public:
  std::uint64_t version = 0;

  std::size_t add(std::string name, std::vector<int> shape) {
    if (find(name)) throw ShapeError("duplicate parameter name '" + name + "'");
    const std::size_t n = shape_size(shape);
    arrays_.push_back({std::move(name), std::move(shape), std::vector<T>(n, T(0))});
    return arrays_.size() - 1;
  }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < arrays_.size(); ++i)
      if (arrays_[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t size() const { return arrays_.size(); }
  ParamArray<T>& operator[](std::size_t i) { return arrays_[i]; }
  const ParamArray<T>& operator[](std::size_t i) const { return arrays_[i]; }
  auto begin() { return arrays_.begin(); }
  auto end() { return arrays_.end(); }
  auto begin() const { return arrays_.begin(); }
  auto end() const { return arrays_.end(); }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& a : arrays_) n += a.values.size();
    return n;
  }

  ParamSet zeros_like() const {
    ParamSet out = *this;
    out.fill(T(0));
    return out;
  }

  void fill(T v) {
    for (auto& a : arrays_) std::fill(a.values.begin(), a.values.end(), v);
  }

  bool same_layout(const ParamSet& o) const {
    if (o.arrays_.size() != arrays_.size()) return false;
    for (std::size_t i = 0; i < arrays_.size(); ++i)
      if (arrays_[i].name != o.arrays_[i].name || arrays_[i].shape != o.arrays_[i].shape) return false;
    return true;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    out.version = version;
    for (const auto& a : arrays_) {
      const std::size_t i = out.add(a.name, a.shape);
      for (std::size_t k = 0; k < a.values.size(); ++k) out[i].values[k] = static_cast<U>(a.values[k]);
    }
    return out;
  }

  // Throws NumericError naming the first array holding a non-finite value.
  void check_finite(std::string_view context) const {
    for (const auto& a : arrays_)
      for (T v : a.values)
        if (!std::isfinite(v))
          throw NumericError(std::string(context) + ": non-finite value in parameter '" + a.name + "'");
  }

  friend bool operator==(const ParamSet& l, const ParamSet& r) { return l.arrays_ == r.arrays_; }

 private:
  std::vector<ParamArray<T>> arrays_;
};

// target <- (1 - tau) * target + tau * online, elementwise.
template <class T>
void soft_update(ParamSet<T>& target, const ParamSet<T>& online, double tau) {
  if (!target.same_layout(online)) throw ShapeError("soft_update: parameter layouts differ");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in [0, 1]");
  if (tau == 0.0) return;
  for (std::size_t i = 0; i < target.size(); ++i)
    kernels::blend(static_cast<T>(tau), online[i].values.data(), target[i].values.data(), target[i].values.size());
}

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
class Adam {
 public:
  Adam(const ParamSet<T>& like, AdamConfig cfg) : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

  // Applies one update in place. Throws NumericError naming the first
  // parameter with a non-finite gradient, before touching any state.
  void step(ParamSet<T>& params, const ParamSet<T>& grads) {
    if (!params.same_layout(grads) || !params.same_layout(m_)) throw ShapeError("Adam: layout mismatch");
    grads.check_finite("gradient");
    ++steps_;
    const kernels::AdamCoefficients c{cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps,
                                      1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_)),
                                      1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_))};
    for (std::size_t i = 0; i < params.size(); ++i)
      kernels::adam_step(c, grads[i].values.data(), params[i].values.data(), m_[i].values.data(),
                         v_[i].values.data(), params[i].values.size());
    ++params.version;
  }

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  ParamSet<T> m_;
  ParamSet<T> v_;
  std::int64_t steps_ = 0;
};

}  // namespace caps::nn
