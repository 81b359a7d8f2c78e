#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "caps/kernels/kernels.hpp"

namespace caps::kernels {

namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(__i386__)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  const Isa best = detected_isa();
  if (const char* forced = std::getenv("CAPS_KERNELS")) {
    if (std::string(forced) == "scalar") return Isa::scalar;
  }
  return best;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
  static const Isa isa = cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
  return isa;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::avx2 && detected_isa() != Isa::avx2)
    throw std::invalid_argument("AVX2/FMA kernels requested but not supported by this CPU");
  active().store(isa, std::memory_order_relaxed);
}

float dot(const float* a, const float* b, std::size_t n) {
  return active_isa() == Isa::avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}
double dot(const double* a, const double* b, std::size_t n) {
  return active_isa() == Isa::avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  if (active_isa() == Isa::avx2) avx2::axpy(alpha, x, y, n);
  else scalar::axpy(alpha, x, y, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  if (active_isa() == Isa::avx2) avx2::axpy(alpha, x, y, n);
  else scalar::axpy(alpha, x, y, n);
}

void blend(float tau, const float* src, float* dst, std::size_t n) {
  if (active_isa() == Isa::avx2) avx2::blend(tau, src, dst, n);
  else scalar::blend(tau, src, dst, n);
}
void blend(double tau, const double* src, double* dst, std::size_t n) {
  if (active_isa() == Isa::avx2) avx2::blend(tau, src, dst, n);
  else scalar::blend(tau, src, dst, n);
}

void adam_step(const AdamCoefficients& c, const float* grad, float* param, float* m, float* v,
               std::size_t n) {
  if (active_isa() == Isa::avx2) avx2::adam_step(c, grad, param, m, v, n);
  else scalar::adam_step(c, grad, param, m, v, n);
}
void adam_step(const AdamCoefficients& c, const double* grad, double* param, double* m,
               double* v, std::size_t n) {
  if (active_isa() == Isa::avx2) avx2::adam_step(c, grad, param, m, v, n);
  else scalar::adam_step(c, grad, param, m, v, n);
}

}  // namespace caps::kernels
