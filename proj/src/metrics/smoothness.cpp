#include <cmath>
#include <numbers>
#include <stdexcept>

#include "caps/metrics/metrics.hpp"

namespace caps::metrics {

double smoothness_value(std::span<const SpectrumBin> spectrum, double fs) {
  if (spectrum.empty()) throw std::invalid_argument("empty spectrum");
  double sum = 0.0;
  for (const auto& b : spectrum) sum += b.amplitude * b.frequency;
  return 2.0 * sum / (static_cast<double>(spectrum.size()) * fs);
}

double smoothness_value(std::span<const double> series, double fs) {
  const auto spec = amplitude_spectrum(series, fs);
  return smoothness_value(spec, fs);
}

double mean_abs_steering_change(const ActionTrace& trace, double steering_limit_rad) {
  const auto& s = trace.samples;
  if (s.size() < 2) throw std::invalid_argument("steering change needs at least 2 samples");
  double sum = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) sum += std::fabs(s[i][0] - s[i - 1][0]);
  const double degrees_per_unit = steering_limit_rad * 180.0 / std::numbers::pi;
  return sum / static_cast<double>(s.size() - 1) * degrees_per_unit;
}

SmoothnessReport smoothness(const ActionTrace& trace, double steering_limit_rad, UnitScale units, bool remove_mean) {
  const std::size_t n = trace.samples.size();
  if (n < 2) throw std::invalid_argument("smoothness needs at least 2 samples");
  std::vector<double> steer(n), speed(n);
  for (std::size_t i = 0; i < n; ++i) {
    steer[i] = trace.samples[i][0] * units.steering;
    speed[i] = trace.samples[i][1] * units.speed;
  }
  if (remove_mean) {
    for (auto* v : {&steer, &speed}) {
      double m = 0.0;
      for (double x : *v) m += x;
      m /= static_cast<double>(n);
      for (double& x : *v) x -= m;
    }
  }
  SmoothnessReport r;
  r.sm_steering = smoothness_value(steer, trace.fs);
  r.sm_speed = smoothness_value(speed, trace.fs);
  r.mean_abs_steering_change = mean_abs_steering_change(trace, steering_limit_rad);
  r.n_samples = static_cast<std::int64_t>(n);
  return r;
}

SmoothnessReport pool(std::span<const SmoothnessReport> reports) {
  if (reports.empty()) throw std::invalid_argument("nothing to pool");
  SmoothnessReport p;
  for (const auto& r : reports) {
    p.sm_steering += r.sm_steering;
    p.sm_speed += r.sm_speed;
    p.mean_abs_steering_change += r.mean_abs_steering_change;
    p.n_samples += r.n_samples;
  }
  const double k = static_cast<double>(reports.size());
  p.sm_steering /= k;
  p.sm_speed /= k;
  p.mean_abs_steering_change /= k;
  return p;
}

}  // namespace caps::metrics
