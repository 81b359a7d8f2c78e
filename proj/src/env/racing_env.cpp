#include "caps/env/racing_env.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "caps/util/errors.hpp"

namespace caps::env {

std::string_view to_string(DoneReason reason) {
  switch (reason) {
    case DoneReason::collision: return "collision";
    case DoneReason::lap_complete: return "lap_complete";
    case DoneReason::timeout: return "timeout";
  }
  return "unknown";
}

void CameraConfig::validate() const {
  if (height < 4 || width < 4) throw ConfigError("camera resolution must be at least 4x4");
  if (!(mount_height > 0.0)) throw ConfigError("camera.mount_height must be positive");
  if (!(pitch > -1.5708 && pitch <= 1.5708)) throw ConfigError("camera.pitch must be in (-pi/2, pi/2]");
  if (!(horizontal_fov > 0.0 && horizontal_fov < 3.1)) throw ConfigError("camera.horizontal_fov out of range");
  if (!(max_view_distance > 0.0)) throw ConfigError("camera.max_view_distance must be positive");
  if (wall_band < 0.0) throw ConfigError("camera.wall_band must be >= 0");
  if (supersample < 1 || supersample > 8) throw ConfigError("camera.supersample must be in [1, 8]");
}

void EnvConfig::validate() const {
  if (!(dt > 0.0)) throw ConfigError("env.dt must be positive");
  if (max_episode_steps < 1) throw ConfigError("env.max_episode_steps must be >= 1");
  speed.validate();
  vehicle.validate();
  camera.validate();
  if (jitter.position < 0.0 || jitter.heading < 0.0) throw ConfigError("reset jitter must be >= 0");
}

void update_progress(const TrackSpec& track, const CarState& prev, CarState& next) {
  const CenterlineProjection proj = track.project(next.pose.position);
  double progress = (proj.arc_length - track.start_offset) / track.length;
  progress -= std::floor(progress);
  if (progress >= 1.0) progress = 0.0;
  double delta = progress - prev.lap_progress;
  if (delta > 0.5) delta -= 1.0;
  if (delta < -0.5) delta += 1.0;
  next.lap_progress = progress;
  next.unwrapped_progress = prev.unwrapped_progress + delta;
  next.laps_completed = prev.laps_completed;

  // Forward crossing of the lap line segment.
  const Vec2 tangent{std::cos(track.start_pose.heading), std::sin(track.start_pose.heading)};
  const Vec2 origin = track.start_pose.position;
  const double side_prev = dot(prev.pose.position - origin, tangent);
  const double side_next = dot(next.pose.position - origin, tangent);
  const bool crossed = side_prev < 0.0 && side_next >= 0.0 &&
                       segments_intersect(prev.pose.position, next.pose.position, track.lap_line.a,
                                          track.lap_line.b);
  if (crossed && next.unwrapped_progress >= prev.laps_completed + 0.5) {
    next.laps_completed = prev.laps_completed + 1;
    next.unwrapped_progress = static_cast<double>(next.laps_completed);
    next.lap_progress = 0.0;
  }
}

Termination check_termination(const TrackSpec& track, const CarState& prev, const CarState& next,
                              int step_count, int max_episode_steps) {
  if (track.crosses_wall(prev.pose.position, next.pose.position)) return {true, DoneReason::collision};
  if (next.laps_completed >= track.lap_count && next.laps_completed > prev.laps_completed)
    return {true, DoneReason::lap_complete};
  if (step_count >= max_episode_steps) return {true, DoneReason::timeout};
  return {};
}

double reward(const CarState& prev, const CarState& next, const Termination& result,
              const RewardConfig& cfg, const SpeedConfig& speed) {
  double r = (next.unwrapped_progress - prev.unwrapped_progress) * cfg.progress_scale;
  if (cfg.speed_bonus != 0.0) r += cfg.speed_bonus * next.speed / speed.v_max;
  if (result.reason == DoneReason::collision) r -= cfg.collision_penalty;
  return r;
}

Observation render(const TrackSpec& track, const CarState& state, const CameraConfig& cam) {
  static constexpr std::array<int, 3> kSky{160, 200, 235};
  static constexpr std::array<int, 3> kGround{40, 110, 50};
  static constexpr std::array<int, 3> kTrack{95, 95, 100};
  static constexpr std::array<int, 3> kWall{210, 50, 45};

  Observation img(cam.height, cam.width, 3);
  const int ss = cam.supersample;
  const double focal = (cam.width / 2.0) / std::tan(cam.horizontal_fov / 2.0);
  const double sp = std::sin(cam.pitch), cp = std::cos(cam.pitch);
  const double sh = std::sin(state.pose.heading), ch = std::cos(state.pose.heading);
  const Vec2 cam_pos{state.pose.position.x + cam.mount_forward * ch,
                     state.pose.position.y + cam.mount_forward * sh};
  const double half = track.track_width / 2.0;
  const double wall_edge = half + cam.wall_band;
  const int denom = ss * ss;

  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      std::array<int, 3> acc{0, 0, 0};
      for (int sy = 0; sy < ss; ++sy) {
        // Integer numerators keep mirrored samples exact negatives of each other.
        const double v = (2.0 * (y * ss + sy) + 1.0 - cam.height * ss) / (2.0 * ss * focal);
        const double rz = -sp - v * cp;  // ray z component (up positive)
        for (int sx = 0; sx < ss; ++sx) {
          const double u = (2.0 * (x * ss + sx) + 1.0 - cam.width * ss) / (2.0 * ss * focal);
          const std::array<int, 3>* color = &kSky;
          if (rz < 0.0) {
            const double t = cam.mount_height / -rz;
            const double forward = t * (cp - v * sp);
            const double left = -t * u;
            if (forward * forward + left * left > cam.max_view_distance * cam.max_view_distance) {
              color = &kGround;
            } else {
              const Vec2 p{cam_pos.x + forward * ch - left * sh, cam_pos.y + forward * sh + left * ch};
              const double d = track.distance_within_reach(p);
              color = d < half ? &kTrack : (d < wall_edge ? &kWall : &kGround);
            }
          }
          for (int c = 0; c < 3; ++c) acc[static_cast<std::size_t>(c)] += (*color)[static_cast<std::size_t>(c)];
        }
      }
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<std::uint8_t>((acc[static_cast<std::size_t>(c)] + denom / 2) / denom);
    }
  }
  return img;
}

RacingEnv::RacingEnv(std::shared_ptr<const TrackSpec> track, EnvConfig config)
    : track_(std::move(track)), config_(std::move(config)) {
  if (!track_) throw ConfigError("environment requires a track");
  config_.validate();
}

void RacingEnv::set_speed(const SpeedConfig& speed) {
  speed.validate();
  config_.speed = speed;
}

Observation RacingEnv::reset(Rng& rng) {
  state_ = CarState{};
  state_.pose = track_->start_pose;
  if (config_.jitter.enabled) {
    state_.pose.position.x += rng.uniform(-config_.jitter.position, config_.jitter.position);
    state_.pose.position.y += rng.uniform(-config_.jitter.position, config_.jitter.position);
    state_.pose.heading += rng.uniform(-config_.jitter.heading, config_.jitter.heading);
  }
  CarState probe = state_;
  update_progress(*track_, state_, probe);
  state_.lap_progress = probe.lap_progress;
  // Start slightly behind the line counts as negative progress, not a full lap.
  state_.unwrapped_progress = state_.lap_progress > 0.5 ? state_.lap_progress - 1.0 : state_.lap_progress;
  state_.laps_completed = 0;
  steps_ = 0;
  done_ = false;
  return render(*track_, state_, config_.camera);
}

StepResult RacingEnv::step(const Action& action) {
  if (done_) throw std::logic_error("RacingEnv::step called on a finished episode; call reset()");
  StepResult out;
  out.executed = clamp_action(action);
  CarState next = env::step(state_, out.executed, config_.dt, config_.speed, config_.vehicle);
  update_progress(*track_, state_, next);
  ++steps_;
  const Termination term = check_termination(*track_, state_, next, steps_, config_.max_episode_steps);
  out.reward = env::reward(state_, next, term, config_.reward, config_.speed);
  out.done = term.done;
  out.done_reason = term.reason;
  state_ = next;
  done_ = term.done;
  out.observation = render(*track_, state_, config_.camera);
  return out;
}

}  // namespace caps::env
