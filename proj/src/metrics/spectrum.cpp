#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <stdexcept>

#include "caps/metrics/metrics.hpp"

namespace caps::metrics {
namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::vector<SpectrumBin> amplitude_spectrum(std::span<const double> series, double fs) {
  const std::size_t n = series.size();
  if (n < 2) throw std::invalid_argument("amplitude spectrum needs at least 2 samples");
  if (!(fs > 0.0) || !std::isfinite(fs)) throw std::invalid_argument("sampling rate must be positive");

  const std::size_t bins = n / 2 + 1;
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) in[i] = series[i];
  fftw_execute(plan);

  std::vector<SpectrumBin> result;
  result.reserve(n / 2);
  const double nd = static_cast<double>(n);
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double mag = std::hypot(out[k][0], out[k][1]);
    const bool nyquist = n % 2 == 0 && k == n / 2;
    result.push_back({static_cast<double>(k) * fs / nd, (nyquist ? 1.0 : 2.0) * mag / nd});
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return result;
}

}  // namespace caps::metrics
