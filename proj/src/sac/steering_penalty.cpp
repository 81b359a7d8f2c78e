#include <cmath>
#include <numbers>

#include "caps/sac/learner.hpp"

namespace caps::sac {

double steering_penalty_reward(double steering, double coefficient, double steering_limit_rad) {
  const double degrees = std::fabs(steering) * steering_limit_rad * 180.0 / std::numbers::pi;
  return -coefficient * degrees;
}

}  // namespace caps::sac
