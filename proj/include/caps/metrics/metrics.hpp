#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace caps::metrics {

struct SpectrumBin {
  double frequency = 0.0;  // Hz
  double amplitude = 0.0;
};

// One-sided amplitude spectrum without the DC bin: k = 1 .. floor(n/2),
// f_k = k fs / n, M_k = 2|X_k|/n, and |X_k|/n for the Nyquist bin of even n.
// Throws std::invalid_argument when n < 2 or fs <= 0.
std::vector<SpectrumBin> amplitude_spectrum(std::span<const double> series, double fs);

// S_m = 2 / (n_b fs) * sum_k M_k f_k with n_b = floor(n/2) one-sided bins.
double smoothness_value(std::span<const SpectrumBin> spectrum, double fs);
double smoothness_value(std::span<const double> series, double fs);

struct ActionTrace {
  std::vector<std::array<double, 2>> samples;  // (steering, speed), normalized
  double fs = 30.0;
};

// Multipliers applied to the normalized series before analysis.
struct UnitScale {
  double steering = 1.0;
  double speed = 1.0;
};

struct SmoothnessReport {
  double sm_steering = 0.0;
  double sm_speed = 0.0;
  double mean_abs_steering_change = 0.0;  // degrees
  std::int64_t n_samples = 0;
};

// Mean |steering_t - steering_{t-1}| in degrees for normalized steering.
double mean_abs_steering_change(const ActionTrace& trace, double steering_limit_rad);

SmoothnessReport smoothness(const ActionTrace& trace, double steering_limit_rad, UnitScale units = {},
                            bool remove_mean = false);

// Equal-weight mean of per-run reports; n_samples is the total.
SmoothnessReport pool(std::span<const SmoothnessReport> reports);

struct RunOutcome {
  bool completed = false;
  double lap_time_s = 0.0;
};

struct RunStats {
  std::int64_t runs = 0;
  std::int64_t completions = 0;
  double completion_rate = 0.0;  // percent
  double avg_lap_time_s = 0.0;   // NaN without completions
};

// Throws std::invalid_argument for zero runs.
RunStats aggregate_runs(std::span<const RunOutcome> outcomes);

}  // namespace caps::metrics
