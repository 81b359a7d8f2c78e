#pragma once

// Data-parallel inner loops used by the approximator.
//
// Every kernel has a portable scalar reference implementation and an AVX2+FMA
// variant. The variant is chosen once at runtime from CPUID; the environment
// variable CAPS_KERNELS=scalar forces the reference path.

#include <cstddef>
#include <string_view>

namespace caps::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// Best ISA supported by the running CPU.
Isa detected_isa();

// ISA currently used by the dispatching entry points below.
Isa active_isa();

// Throws std::invalid_argument when the CPU does not support `isa`.
void set_active_isa(Isa isa);

// RAII override of the active ISA, used by equivalence tests.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

struct AdamCoefficients {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

// sum_i a[i] * b[i]
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

// y += alpha * x
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

// dst = (1 - tau) * dst + tau * src
void blend(float tau, const float* src, float* dst, std::size_t n);
void blend(double tau, const double* src, double* dst, std::size_t n);

// One Adam step over a flat parameter array; m and v are updated in place.
void adam_step(const AdamCoefficients& c, const float* grad, float* param, float* m, float* v,
               std::size_t n);
void adam_step(const AdamCoefficients& c, const double* grad, double* param, double* m,
               double* v, std::size_t n);

namespace scalar {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void blend(float tau, const float* src, float* dst, std::size_t n);
void blend(double tau, const double* src, double* dst, std::size_t n);
void adam_step(const AdamCoefficients& c, const float* grad, float* param, float* m, float* v,
               std::size_t n);
void adam_step(const AdamCoefficients& c, const double* grad, double* param, double* m,
               double* v, std::size_t n);
}  // namespace scalar

namespace avx2 {
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void blend(float tau, const float* src, float* dst, std::size_t n);
void blend(double tau, const double* src, double* dst, std::size_t n);
void adam_step(const AdamCoefficients& c, const float* grad, float* param, float* m, float* v,
               std::size_t n);
void adam_step(const AdamCoefficients& c, const double* grad, double* param, double* m,
               double* v, std::size_t n);
}  // namespace avx2

}  // namespace caps::kernels
