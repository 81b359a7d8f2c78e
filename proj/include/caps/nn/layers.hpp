#pragma once

// Layer set of the approximator with explicit reverse-mode passes:
// valid-padding strided convolution, dense, and ReLU, composed by Sequential.
// Activations are batches of flattened CHW samples.

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "caps/kernels/kernels.hpp"
#include "caps/nn/param_set.hpp"
#include "caps/util/rng.hpp"

namespace caps::nn {

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  int size() const { return channels * height * width; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

template <class T>
struct Batch {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Batch() = default;
  Batch(int r, int c, T fill = T(0)) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  T* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  T operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// Fan-in scaled uniform initialization U(-scale/sqrt(fan_in), scale/sqrt(fan_in)).
template <class T>
void init_uniform(std::vector<T>& values, int fan_in, double scale, Rng& rng) {
  const double bound = scale / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
class Conv2d {
 public:
  Conv2d(Shape3 in, int out_channels, int kernel, int stride, ParamSet<T>& params, const std::string& name)
      : in_(in), kernel_(kernel), stride_(stride), name_(name) {
    if (kernel < 1 || stride < 1 || out_channels < 1) throw ShapeError(name + ": invalid convolution spec");
    const int ho = (in.height - kernel) / stride + 1;
    const int wo = (in.width - kernel) / stride + 1;
    if (in.height < kernel || in.width < kernel || ho < 1 || wo < 1)
      throw ShapeError(name + ": input " + std::to_string(in.height) + "x" + std::to_string(in.width) +
                       " too small for kernel " + std::to_string(kernel));
    out_ = {out_channels, ho, wo};
    weight_ = params.add(name + ".weight", {out_channels, in.channels, kernel, kernel});
    bias_ = params.add(name + ".bias", {out_channels});
  }

  Shape3 input_shape() const { return in_; }
  Shape3 output_shape() const { return out_; }
  const std::string& name() const { return name_; }
  int patch_size() const { return in_.channels * kernel_ * kernel_; }

  void init(ParamSet<T>& params, Rng& rng, double scale) const {
    init_uniform(params[weight_].values, patch_size(), scale, rng);
    init_uniform(params[bias_].values, patch_size(), scale, rng);
  }

  void forward(const ParamSet<T>& params, const Batch<T>& x, Batch<T>& y) const {
    const int P = out_.height * out_.width, K = patch_size();
    y = Batch<T>(x.rows, out_.size());
    std::vector<T> col(static_cast<std::size_t>(P) * K);
    const T* w = params[weight_].values.data();
    const T* b = params[bias_].values.data();
    for (int n = 0; n < x.rows; ++n) {
      im2col(x.row(n), col.data());
      T* out = y.row(n);
      for (int o = 0; o < out_.channels; ++o) {
        const T* wo = w + static_cast<std::size_t>(o) * K;
        for (int p = 0; p < P; ++p)
          out[o * P + p] = b[o] + kernels::dot(wo, col.data() + static_cast<std::size_t>(p) * K, static_cast<std::size_t>(K));
      }
    }
  }

  void backward(const ParamSet<T>& params, const Batch<T>& x, const Batch<T>& dy, Batch<T>* dx,
                ParamSet<T>* grads) const {
    const int P = out_.height * out_.width, K = patch_size();
    std::vector<T> col(static_cast<std::size_t>(P) * K);
    std::vector<T> dcol;
    if (dx) {
      *dx = Batch<T>(x.rows, in_.size());
      dcol.resize(col.size());
    }
    if (!dx && !grads) return;
    const T* w = params[weight_].values.data();
    T* dw = grads ? (*grads)[weight_].values.data() : nullptr;
    T* db = grads ? (*grads)[bias_].values.data() : nullptr;
    for (int n = 0; n < x.rows; ++n) {
      const T* g = dy.row(n);
      if (grads) im2col(x.row(n), col.data());
      if (dx) std::fill(dcol.begin(), dcol.end(), T(0));
      for (int o = 0; o < out_.channels; ++o) {
        const T* wo = w + static_cast<std::size_t>(o) * K;
        for (int p = 0; p < P; ++p) {
          const T go = g[o * P + p];
          if (go == T(0)) continue;
          if (grads) {
            kernels::axpy(go, col.data() + static_cast<std::size_t>(p) * K, dw + static_cast<std::size_t>(o) * K,
                          static_cast<std::size_t>(K));
            db[o] += go;
          }
          if (dx) kernels::axpy(go, wo, dcol.data() + static_cast<std::size_t>(p) * K, static_cast<std::size_t>(K));
        }
      }
      if (dx) col2im(dcol.data(), dx->row(n));
    }
  }

 private:
  // col[p][c][ky][kx] = x[c][oy*s+ky][ox*s+kx]
  void im2col(const T* x, T* col) const {
    const int K = patch_size();
    for (int oy = 0; oy < out_.height; ++oy)
      for (int ox = 0; ox < out_.width; ++ox) {
        T* dst = col + static_cast<std::size_t>(oy * out_.width + ox) * K;
        for (int c = 0; c < in_.channels; ++c)
          for (int ky = 0; ky < kernel_; ++ky) {
            const T* src = x + (static_cast<std::size_t>(c) * in_.height + oy * stride_ + ky) * in_.width + ox * stride_;
            for (int kx = 0; kx < kernel_; ++kx) *dst++ = src[kx];
          }
      }
  }

  void col2im(const T* col, T* dx) const {
    const int K = patch_size();
    for (int oy = 0; oy < out_.height; ++oy)
      for (int ox = 0; ox < out_.width; ++ox) {
        const T* src = col + static_cast<std::size_t>(oy * out_.width + ox) * K;
        for (int c = 0; c < in_.channels; ++c)
          for (int ky = 0; ky < kernel_; ++ky) {
            T* dst = dx + (static_cast<std::size_t>(c) * in_.height + oy * stride_ + ky) * in_.width + ox * stride_;
            for (int kx = 0; kx < kernel_; ++kx) dst[kx] += *src++;
          }
      }
  }

  Shape3 in_;
  Shape3 out_;
  int kernel_;
  int stride_;
  std::string name_;
  std::size_t weight_ = 0;
  std::size_t bias_ = 0;
};

template <class T>
class Dense {
 public:
  Dense(int in, int out, ParamSet<T>& params, const std::string& name) : in_(in), out_(out), name_(name) {
    if (in < 1 || out < 1) throw ShapeError(name + ": invalid dense shape");
    weight_ = params.add(name + ".weight", {out, in});
    bias_ = params.add(name + ".bias", {out});
  }

  int input_size() const { return in_; }
  int output_size() const { return out_; }
  const std::string& name() const { return name_; }
  std::size_t weight_index() const { return weight_; }
  std::size_t bias_index() const { return bias_; }

  void init(ParamSet<T>& params, Rng& rng, double scale) const {
    init_uniform(params[weight_].values, in_, scale, rng);
    init_uniform(params[bias_].values, in_, scale, rng);
  }

  void forward(const ParamSet<T>& params, const Batch<T>& x, Batch<T>& y) const {
    y = Batch<T>(x.rows, out_);
    const T* w = params[weight_].values.data();
    const T* b = params[bias_].values.data();
    for (int n = 0; n < x.rows; ++n) {
      const T* xn = x.row(n);
      T* yn = y.row(n);
      for (int o = 0; o < out_; ++o)
        yn[o] = b[o] + kernels::dot(w + static_cast<std::size_t>(o) * in_, xn, static_cast<std::size_t>(in_));
    }
  }

  void backward(const ParamSet<T>& params, const Batch<T>& x, const Batch<T>& dy, Batch<T>* dx,
                ParamSet<T>* grads) const {
    if (dx) *dx = Batch<T>(x.rows, in_);
    const T* w = params[weight_].values.data();
    T* dw = grads ? (*grads)[weight_].values.data() : nullptr;
    T* db = grads ? (*grads)[bias_].values.data() : nullptr;
    for (int n = 0; n < x.rows; ++n) {
      const T* g = dy.row(n);
      for (int o = 0; o < out_; ++o) {
        const T go = g[o];
        if (go == T(0)) continue;
        if (grads) {
          kernels::axpy(go, x.row(n), dw + static_cast<std::size_t>(o) * in_, static_cast<std::size_t>(in_));
          db[o] += go;
        }
        if (dx) kernels::axpy(go, w + static_cast<std::size_t>(o) * in_, dx->row(n), static_cast<std::size_t>(in_));
      }
    }
  }

 private:
  int in_;
  int out_;
  std::string name_;
  std::size_t weight_ = 0;
  std::size_t bias_ = 0;
};

class Relu {
 public:
  explicit Relu(std::string name) : name_(std::move(name)) {}
  const std::string& name() const { return name_; }

  template <class T>
  void forward(const Batch<T>& x, Batch<T>& y) const {
    y = x;
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
  }

  // Uses the layer output: the gradient passes where the output is positive.
  template <class T>
  void backward(const Batch<T>& y, const Batch<T>& dy, Batch<T>& dx) const {
    dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
      if (!(y.data[i] > T(0))) dx.data[i] = T(0);
  }

 private:
  std::string name_;
};

template <class T>
class Sequential {
 public:
  using Layer = std::variant<Conv2d<T>, Dense<T>, Relu>;

  // activations[0] is the input, activations[i + 1] the output of layer i.
  struct Tape {
    std::vector<Batch<T>> activations;
  };

  void push(Layer layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const { return layers_.size(); }
  const Layer& operator[](std::size_t i) const { return layers_[i]; }
  std::vector<Layer>& layers() { return layers_; }

  // Throws NumericError naming the first layer producing a non-finite value.
  Batch<T> forward(const ParamSet<T>& params, Batch<T> x, Tape* tape) const {
    if (tape) {
      tape->activations.clear();
      tape->activations.reserve(layers_.size() + 1);
    }
    for (const Layer& layer : layers_) {
      Batch<T> y;
      std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Relu>) l.forward(x, y);
            else l.forward(params, x, y);
          },
          layer);
      for (T v : y.data)
        if (!std::isfinite(v)) throw NumericError("non-finite activation in layer '" + layer_name(layer) + "'");
      if (tape) tape->activations.push_back(std::move(x));
      x = std::move(y);
    }
    if (tape) tape->activations.push_back(x);
    return x;
  }

  // Accumulates parameter gradients into `grads` (when non-null) and returns
  // the gradient with respect to the input when `need_input_grad` is set.
  Batch<T> backward(const ParamSet<T>& params, const Tape& tape, Batch<T> dy, ParamSet<T>* grads,
                    bool need_input_grad) const {
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const bool want_dx = need_input_grad || i > 0;
      Batch<T> dx;
      std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Relu>) l.backward(tape.activations[i + 1], dy, dx);
            else l.backward(params, tape.activations[i], dy, want_dx ? &dx : nullptr, grads);
          },
          layers_[i]);
      dy = std::move(dx);
    }
    return dy;
  }

  void init(ParamSet<T>& params, Rng& rng) const {
    for (const Layer& layer : layers_)
      std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (!std::is_same_v<L, Relu>) l.init(params, rng, 1.0);
          },
          layer);
  }

 private:
  static std::string layer_name(const Layer& layer) {
    return std::visit([](const auto& l) { return l.name(); }, layer);
  }

  std::vector<Layer> layers_;
};

}  // namespace caps::nn
