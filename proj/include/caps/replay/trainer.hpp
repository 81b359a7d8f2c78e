#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "caps/env/racing_env.hpp"
#include "caps/nn/networks.hpp"
#include "caps/replay/replay.hpp"
#include "caps/sac/learner.hpp"

namespace caps::replay {

struct TrainerConfig {
  int workers = 3;
  bool deterministic = false;  // one thread, actors round-robin with updates interleaved
  int env_steps_per_update = 4;
  std::int64_t step_budget = 300000;
  std::int64_t update_budget = 0;  // 0: no limit
  std::int64_t warmup = 5000;      // global buffer size before the first update
  int publish_every = 50;          // learner updates between policy snapshots
  int checkpoint_every = 5000;     // learner updates; 0 keeps only the initial and final ones
  double steering_penalty = 0.0;   // reward shaping coefficient per degree
  std::string translator = "identity";
  std::uint64_t seed = 1;
  void validate() const;
};

struct TrainingSetup {
  std::shared_ptr<const env::TrackSpec> track;
  env::EnvConfig env;
  sac::SacConfig sac;
  sac::CapsConfig caps;  // caps.phi also carries the sim-to-real pipeline set
  nn::ArchConfig arch;
  ReplayConfig replay;
  TrainerConfig trainer;
  std::string out_dir;
};

struct EpisodeRecord {
  int actor_id = 0;
  std::int64_t episode_index = 0;
  int steps = 0;
  double episode_return = 0.0;
  env::DoneReason done_reason = env::DoneReason::timeout;
  double lap_time_s = 0.0;  // NaN unless the lap was completed
};

struct TrainingSummary {
  std::int64_t env_steps = 0;
  std::int64_t updates = 0;
  std::int64_t episodes = 0;
  std::vector<std::string> checkpoints;
};

// Runs actors and the learner until the step or update budget is reached.
// Writes <out>/train_log.jsonl, <out>/episodes.jsonl and <out>/checkpoints/.
TrainingSummary run_training(const TrainingSetup& setup);

// Checkpoint bundle: policy, critic1, critic2, target1, target2, log_alpha.
void save_checkpoint(const std::string& path, const nn::Networks<float>& nets, const nn::ParamSet<float>& log_alpha);
void load_checkpoint(const std::string& path, nn::Networks<float>& nets, nn::ParamSet<float>& log_alpha);
// Policy only; the other sets are still checked against the architecture.
nn::PolicyNet<float> load_policy(const std::string& path, int height, int width, const nn::ArchConfig& arch);

std::string episode_json(const EpisodeRecord& rec);

}  // namespace caps::replay
