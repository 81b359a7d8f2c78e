#include <stdexcept>

#include "caps/replay/replay.hpp"

namespace caps::replay {

Transition make_n_step(std::span<const StepRecord> window, double gamma, int n) {
  if (window.empty()) throw std::invalid_argument("make_n_step: empty window");
  if (n < 1) throw std::invalid_argument("make_n_step: n must be >= 1");
  std::size_t m = 0;
  double acc = 0.0;
  double disc = 1.0;
  while (m < window.size() && m < static_cast<std::size_t>(n)) {
    acc += disc * window[m].reward;
    disc *= gamma;
    ++m;
    if (window[m - 1].episode_end) break;
  }
  const StepRecord& last = window[m - 1];
  Transition t;
  t.obs = window[0].obs;
  t.action = window[0].action;
  t.n_step_return = acc;
  t.bootstrap_obs = last.next_obs;
  t.successor_obs = window[0].next_obs;
  t.done = last.terminal;
  t.bootstrap_steps = static_cast<int>(m);
  return t;
}

}  // namespace caps::replay
