#pragma once

#include <array>

#include "caps/util/image.hpp"

namespace caps::replay {

// One replay record. The n-step return covers `bootstrap_steps` rewards; the
// bootstrap term is discounted by gamma^bootstrap_steps and masked when done.
struct Transition {
  StackedObs obs;
  std::array<double, 2> action{};
  double n_step_return = 0.0;
  StackedObs bootstrap_obs;  // s_{t+m}
  StackedObs successor_obs;  // s_{t+1}
  bool done = false;
  int bootstrap_steps = 1;
};

}  // namespace caps::replay
