#include "caps/kernels/kernels.hpp"

#include <cmath>

namespace caps::kernels::scalar {

namespace {

template <class T>
T dot_impl(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void axpy_impl(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void blend_impl(T tau, const T* src, T* dst, std::size_t n) {
  const T keep = T(1) - tau;
  for (std::size_t i = 0; i < n; ++i) dst[i] = keep * dst[i] + tau * src[i];
}

template <class T>
void adam_impl(const AdamCoefficients& c, const T* grad, T* param, T* m, T* v, std::size_t n) {
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T step = static_cast<T>(c.lr / c.bias_correction1);
  const T inv_bc2 = static_cast<T>(1.0 / c.bias_correction2);
  const T eps = static_cast<T>(c.eps);
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    param[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
  }
}

}  // namespace

float dot(const float* a, const float* b, std::size_t n) { return dot_impl(a, b, n); }
double dot(const double* a, const double* b, std::size_t n) { return dot_impl(a, b, n); }
void axpy(float alpha, const float* x, float* y, std::size_t n) { axpy_impl(alpha, x, y, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { axpy_impl(alpha, x, y, n); }
void blend(float tau, const float* src, float* dst, std::size_t n) { blend_impl(tau, src, dst, n); }
void blend(double tau, const double* src, double* dst, std::size_t n) {
  blend_impl(tau, src, dst, n);
}
void adam_step(const AdamCoefficients& c, const float* grad, float* param, float* m, float* v,
               std::size_t n) {
  adam_impl(c, grad, param, m, v, n);
}
void adam_step(const AdamCoefficients& c, const double* grad, double* param, double* m,
               double* v, std::size_t n) {
  adam_impl(c, grad, param, m, v, n);
}

}  // namespace caps::kernels::scalar
