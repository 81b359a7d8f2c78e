#pragma once

#include <string>
#include <vector>

#include "caps/env/racing_env.hpp"
#include "caps/harness/config.hpp"
#include "caps/metrics/metrics.hpp"
#include "caps/nn/networks.hpp"
#include "caps/replay/trainer.hpp"

namespace caps::harness {

struct EvalRun {
  int index = 0;
  int steps = 0;
  double episode_return = 0.0;
  env::DoneReason done_reason = env::DoneReason::timeout;
  double lap_time_s = 0.0;  // NaN unless completed
  metrics::ActionTrace trace;
  bool has_smoothness = false;  // false for traces shorter than 2 samples
  metrics::SmoothnessReport smoothness;
};

struct EvalResult {
  std::string speed_preset;
  env::SpeedConfig speed;
  std::vector<EvalRun> runs;
  metrics::RunStats stats;
  bool has_pooled = false;
  metrics::SmoothnessReport pooled;
};

// Speed range named by evaluate.speed_preset ("train" keeps env.speed).
env::SpeedConfig evaluation_speed(const ExperimentConfig& cfg);

metrics::UnitScale unit_scale(const ExperimentConfig& cfg, const env::SpeedConfig& speed);

// Deterministic-policy episodes, one seeded reset per run.
EvalResult evaluate_policy(const nn::PolicyNet<float>& policy, const ExperimentConfig& cfg);

// Smoothness and run statistics from already recorded runs.
void summarize(EvalResult& result, const ExperimentConfig& cfg);

// Writes traces/run_NN.csv, episodes.jsonl, run_stats.json, smoothness.json,
// summary.md and SVG plots into `dir`.
void write_evaluation(const EvalResult& result, const std::string& dir);

// Trace CSV with header t,steering,speed. Throws ParseError naming the line.
void write_trace_csv(const metrics::ActionTrace& trace, const std::string& path);
metrics::ActionTrace read_trace_csv(const std::string& path, double fs);

// Episode JSONL records. Throws ParseError naming the line.
std::vector<replay::EpisodeRecord> read_episode_log(const std::string& path);

}  // namespace caps::harness
