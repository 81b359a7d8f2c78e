#include "caps/env/vehicle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>

#include "caps/util/errors.hpp"

namespace caps::env {

void SpeedConfig::validate() const {
  if (!(v_min > 0.0 && v_min < v_max)) throw ConfigError("speed config requires 0 < v_min < v_max");
}

void VehicleConfig::validate() const {
  if (!(wheelbase > 0.0)) throw ConfigError("vehicle.wheelbase must be positive");
  if (!(steering_limit > 0.0 && steering_limit < 1.5))
    throw ConfigError("vehicle.steering_limit must be in (0, 1.5) rad");
  if (speed_time_constant < 0.0 || steering_time_constant < 0.0)
    throw ConfigError("vehicle time constants must be >= 0");
}

Action clamp_action(const Action& action) {
  Action out{std::clamp(action.steering, -1.0, 1.0), std::clamp(action.speed, -1.0, 1.0)};
  if (std::isnan(action.steering)) out.steering = 0.0;
  if (std::isnan(action.speed)) out.speed = 0.0;
  if (!(out == action)) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      std::cerr << "warning: action (" << action.steering << ", " << action.speed
                << ") outside [-1, 1]; clamped (further warnings suppressed)\n";
  }
  return out;
}

namespace {

double relax(double current, double target, double tc, double dt) {
  if (tc <= 0.0) return target;
  return current + (target - current) * (1.0 - std::exp(-dt / tc));
}

}  // namespace

CarState step(const CarState& state, const Action& raw_action, double dt, const SpeedConfig& speed_cfg,
              const VehicleConfig& vehicle) {
  const Action a = clamp_action(raw_action);
  CarState next = state;

  const double v = state.speed;
  const double h = state.pose.heading;
  const double omega = v * std::tan(state.steering) / vehicle.wheelbase;
  if (std::fabs(omega) < 1e-12) {
    next.pose.position.x += v * std::cos(h) * dt;
    next.pose.position.y += v * std::sin(h) * dt;
  } else {
    const double h1 = h + omega * dt;
    next.pose.position.x += v / omega * (std::sin(h1) - std::sin(h));
    next.pose.position.y -= v / omega * (std::cos(h1) - std::cos(h));
    next.pose.heading = h1;
  }

  const double target_speed = speed_cfg.v_min + (a.speed + 1.0) / 2.0 * (speed_cfg.v_max - speed_cfg.v_min);
  const double target_steer = a.steering * vehicle.steering_limit;
  next.speed = std::max(0.0, relax(state.speed, target_speed, vehicle.speed_time_constant, dt));
  next.steering = std::clamp(relax(state.steering, target_steer, vehicle.steering_time_constant, dt),
                             -vehicle.steering_limit, vehicle.steering_limit);
  return next;
}

}  // namespace caps::env
