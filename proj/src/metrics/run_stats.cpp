#include <limits>
#include <stdexcept>

#include "caps/metrics/metrics.hpp"

namespace caps::metrics {

RunStats aggregate_runs(std::span<const RunOutcome> outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("aggregate_runs: zero runs");
  RunStats s;
  s.runs = static_cast<std::int64_t>(outcomes.size());
  double lap_sum = 0.0;
  for (const auto& o : outcomes)
    if (o.completed) {
      ++s.completions;
      lap_sum += o.lap_time_s;
    }
  s.completion_rate = 100.0 * static_cast<double>(s.completions) / static_cast<double>(s.runs);
  s.avg_lap_time_s = s.completions > 0 ? lap_sum / static_cast<double>(s.completions)
                                       : std::numeric_limits<double>::quiet_NaN();
  return s;
}

}  // namespace caps::metrics
