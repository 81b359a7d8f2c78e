#pragma once

#include "caps/env/geometry.hpp"

namespace caps::env {

// Normalized command; each component in [-1, 1].
struct Action {
  double steering = 0.0;
  double speed = 0.0;
  friend bool operator==(const Action&, const Action&) = default;
};

struct SpeedConfig {
  double v_min = 0.35;  // m/s
  double v_max = 2.5;   // m/s
  void validate() const;
};

struct VehicleConfig {
  double wheelbase = 0.26;        // m
  double steering_limit = 0.45;   // rad
  double speed_time_constant = 0.15;     // s; 0 disables the lag
  double steering_time_constant = 0.05;  // s; 0 disables the lag
  void validate() const;
};

struct CarState {
  Pose pose;
  double speed = 0.0;     // m/s, >= 0
  double steering = 0.0;  // wheel angle, rad
  double lap_progress = 0.0;        // [0, 1) along the centerline from the lap line
  double unwrapped_progress = 0.0;  // cumulative laps since reset, may be negative
  int laps_completed = 0;
  friend bool operator==(const CarState&, const CarState&) = default;
};

// Clamps each component into [-1, 1]; logs a warning (once per process) when
// clamping actually changes the command.
Action clamp_action(const Action& action);

// Advances the kinematic bicycle model by dt. The pose integrates exactly
// along the arc implied by the current speed and wheel angle; speed and wheel
// angle then relax toward the commanded targets with first-order lag.
// Progress fields are copied unchanged (see update_progress).
CarState step(const CarState& state, const Action& action, double dt, const SpeedConfig& speed_cfg,
              const VehicleConfig& vehicle);

}  // namespace caps::env
