#pragma once

#include <memory>
#include <optional>
#include <string_view>

#include "caps/env/track.hpp"
#include "caps/env/vehicle.hpp"
#include "caps/util/image.hpp"
#include "caps/util/rng.hpp"

namespace caps::env {

enum class DoneReason { collision, lap_complete, timeout };

std::string_view to_string(DoneReason reason);

struct CameraConfig {
  int height = 40;  // pixels
  int width = 56;
  double mount_height = 0.35;  // m above ground
  double mount_forward = 0.0;  // m ahead of the car reference point
  double pitch = 0.55;         // rad below horizontal
  double horizontal_fov = 1.75;  // rad
  double max_view_distance = 8.0;  // m; beyond this the ground renders as background
  double wall_band = 0.12;         // m of painted wall outside each track edge
  int supersample = 2;             // per-axis samples per pixel
  void validate() const;
};

struct RewardConfig {
  double progress_scale = 100.0;
  double speed_bonus = 0.0;
  double collision_penalty = 1.0;
};

struct ResetJitter {
  bool enabled = true;
  double position = 0.1;  // m, uniform in [-p, p] per axis
  double heading = 0.05;  // rad, uniform in [-h, h]
};

struct EnvConfig {
  double dt = 1.0 / 30.0;
  int max_episode_steps = 1800;
  SpeedConfig speed;
  VehicleConfig vehicle;
  CameraConfig camera;
  RewardConfig reward;
  ResetJitter jitter;
  void validate() const;
};

struct Termination {
  bool done = false;
  std::optional<DoneReason> reason;
};

// Updates lap_progress, unwrapped_progress and laps_completed of `next` from
// its position. A lap is counted when the motion crosses the lap line forward
// after at least half a lap of progress; the unwrapped progress is then
// snapped to the lap count so per-step deltas telescope exactly.
void update_progress(const TrackSpec& track, const CarState& prev, CarState& next);

// Collision takes precedence over lap completion, which takes precedence over timeout.
// `step_count` is the number of steps taken including this one.
Termination check_termination(const TrackSpec& track, const CarState& prev, const CarState& next,
                              int step_count, int max_episode_steps);

double reward(const CarState& prev, const CarState& next, const Termination& result,
              const RewardConfig& cfg, const SpeedConfig& speed);

Observation render(const TrackSpec& track, const CarState& state, const CameraConfig& camera);

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  std::optional<DoneReason> done_reason;
  Action executed;  // the command after clamping
};

// One episode-capable environment instance; not thread-safe, not shared.
class RacingEnv {
 public:
  RacingEnv(std::shared_ptr<const TrackSpec> track, EnvConfig config);

  // Places the car at the start pose (with seeded jitter when enabled) and
  // returns the first observation.
  Observation reset(Rng& rng);
  StepResult step(const Action& action);

  const CarState& state() const { return state_; }
  int step_count() const { return steps_; }
  double elapsed_seconds() const { return steps_ * config_.dt; }
  const TrackSpec& track() const { return *track_; }
  const EnvConfig& config() const { return config_; }
  void set_speed(const SpeedConfig& speed);

 private:
  std::shared_ptr<const TrackSpec> track_;
  EnvConfig config_;
  CarState state_;
  int steps_ = 0;
  bool done_ = true;
};

}  // namespace caps::env
