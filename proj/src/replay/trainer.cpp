#include "caps/replay/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <thread>

#include "caps/nn/serialize.hpp"
#include "json.hpp"

namespace caps::replay {

namespace fs = std::filesystem;

void TrainerConfig::validate() const {
  if (workers < 1) throw ConfigError("run.workers must be >= 1");
  if (env_steps_per_update < 1) throw ConfigError("run.env_steps_per_update must be >= 1");
  if (step_budget < 0) throw ConfigError("run.step_budget must be >= 0");
  if (update_budget < 0) throw ConfigError("run.update_budget must be >= 0");
  if (warmup < 0) throw ConfigError("replay.warmup must be >= 0");
  if (publish_every < 1) throw ConfigError("run.publish_every must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("run.checkpoint_every must be >= 0");
  if (!(steering_penalty >= 0.0) || !std::isfinite(steering_penalty))
    throw ConfigError("run.steering_penalty must be finite and >= 0");
  augment::make_translator(translator);
}

std::string episode_json(const EpisodeRecord& rec) {
  nlohmann::json j;
  j["actor_id"] = rec.actor_id;
  j["episode_index"] = rec.episode_index;
  j["steps"] = rec.steps;
  j["return"] = rec.episode_return;
  j["done_reason"] = std::string(env::to_string(rec.done_reason));
  if (std::isfinite(rec.lap_time_s)) j["lap_time_s"] = rec.lap_time_s;
  else j["lap_time_s"] = nullptr;
  return j.dump();
}

namespace {

std::vector<nn::NamedSet> bundle_views(const nn::Networks<float>& n, const nn::ParamSet<float>& log_alpha) {
  return {{"policy", &n.policy.params}, {"critic1", &n.critic1.params}, {"critic2", &n.critic2.params},
          {"target1", &n.target1.params}, {"target2", &n.target2.params}, {"log_alpha", &log_alpha}};
}

nn::ParamSet<float> log_alpha_layout() {
  nn::ParamSet<float> p;
  p.add("log_alpha", {1});
  return p;
}

using PolicySnapshot = std::shared_ptr<const nn::PolicyNet<float>>;

struct Collected {
  std::optional<EpisodeRecord> episode;
};

class Actor {
 public:
  Actor(int id, const TrainingSetup& setup, std::uint64_t seed)
      : id_(id),
        setup_(setup),
        env_(setup.track, setup.env),
        rng_(seed),
        aug_rng_(rng_.split()),
        reset_rng_(rng_.split()),
        local_(setup.replay.local_capacity, id),
        translator_(augment::make_translator(setup.trainer.translator)) {
    begin_episode();
  }

  // One environment step; flushes into `global` at the threshold or episode end.
  Collected step(const nn::PolicyNet<float>& policy, GlobalBuffer& global) {
    const nn::PolicyOutput out = policy.forward_one(obs_);
    const nn::ActionSample sample = nn::sample_action(out, &rng_);
    env::StepResult res = env_.step({sample.action[0], sample.action[1]});
    double r = res.reward;
    if (setup_.trainer.steering_penalty > 0.0)
      r += sac::steering_penalty_reward(res.executed.steering, setup_.trainer.steering_penalty,
                                        setup_.env.vehicle.steering_limit);
    const StackedObs next = obs_.push(frame(std::move(res.observation)));
    StepRecord rec;
    rec.obs = obs_;
    rec.action = {res.executed.steering, res.executed.speed};
    rec.reward = r;
    rec.next_obs = next;
    rec.terminal = res.done && res.done_reason != env::DoneReason::timeout;
    rec.episode_end = res.done;
    window_.push_back(std::move(rec));
    episode_return_ += r;
    ++episode_steps_;
    obs_ = next;

    const int n = setup_.sac.n_step;
    if (static_cast<int>(window_.size()) == n) emit_front();

    Collected c;
    if (res.done) {
      while (!window_.empty()) emit_front();
      EpisodeRecord ep;
      ep.actor_id = id_;
      ep.episode_index = episode_index_++;
      ep.steps = episode_steps_;
      ep.episode_return = episode_return_;
      ep.done_reason = *res.done_reason;
      ep.lap_time_s = ep.done_reason == env::DoneReason::lap_complete ? env_.elapsed_seconds()
                                                                       : std::numeric_limits<double>::quiet_NaN();
      c.episode = ep;
      global.add_batch(local_.drain());
      begin_episode();
    } else if (local_.size() >= setup_.replay.flush_every) {
      global.add_batch(local_.drain());
    }
    return c;
  }

  std::size_t pending() const { return local_.size() + window_.size(); }

 private:
  void begin_episode() {
    obs_ = StackedObs::initial(frame(env_.reset(reset_rng_)));
    window_.clear();
    episode_return_ = 0.0;
    episode_steps_ = 0;
  }

  // Camera frame as fed to the networks: domain randomization, then the translator.
  FramePtr frame(Image raw) {
    if (!setup_.caps.phi.sim2real_enabled.empty()) raw = augment::sim2real_pipeline(setup_.caps.phi, raw, aug_rng_);
    return std::make_shared<const Image>(translator_->translate(raw));
  }

  void emit_front() {
    const std::vector<StepRecord> w(window_.begin(), window_.end());
    local_.push(make_n_step(w, setup_.sac.gamma, setup_.sac.n_step));
    window_.pop_front();
  }

  int id_;
  const TrainingSetup& setup_;
  env::RacingEnv env_;
  Rng rng_;
  Rng aug_rng_;
  Rng reset_rng_;
  LocalBuffer local_;
  std::shared_ptr<const augment::ObservationTranslator> translator_;
  StackedObs obs_;
  std::deque<StepRecord> window_;
  double episode_return_ = 0.0;
  int episode_steps_ = 0;
  std::int64_t episode_index_ = 0;
};

class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  void write(const std::string& line) {
    std::lock_guard lock(mutex_);
    out_ << line << '\n';
    out_.flush();
  }

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

std::string loss_json(std::int64_t update, std::int64_t env_steps, std::size_t buffer_size,
                      const sac::LossReport& r, std::optional<double> wall_clock) {
  nlohmann::json j;
  j["update"] = update;
  j["env_steps"] = env_steps;
  j["buffer_size"] = buffer_size;
  j["critic_loss"] = r.critic_loss;
  j["policy_loss"] = r.policy_loss;
  j["l_temporal"] = r.l_temporal;
  j["l_spatial"] = r.l_spatial;
  j["alpha"] = r.alpha;
  j["total_policy_objective"] = r.total_policy_objective;
  j["mean_target_q"] = r.mean_target_q;
  if (wall_clock) j["wall_clock_s"] = *wall_clock;
  return j.dump();
}

class Run {
 public:
  explicit Run(const TrainingSetup& setup)
      : setup_(setup),
        master_(setup.trainer.seed),
        learner_(nn::build_networks<float>(setup.env.camera.height, setup.env.camera.width, setup.arch,
                                           master_.next_u64()),
                 setup.sac, setup.caps),
        learner_rng_(master_.split()),
        phi_rng_(master_.split()),
        sample_rng_(master_.split()),
        global_(setup.replay),
        dir_(setup.out_dir),
        train_log_(dir_ / "train_log.jsonl"),
        episode_log_(dir_ / "episodes.jsonl"),
        start_(std::chrono::steady_clock::now()) {
    for (int i = 0; i < setup.trainer.workers; ++i) actors_.emplace_back(std::make_unique<Actor>(i, setup, master_.next_u64()));
    snapshot_ = std::make_shared<const nn::PolicyNet<float>>(learner_.nets().policy);
  }

  TrainingSummary run() {
    checkpoint();
    if (setup_.trainer.deterministic) run_deterministic();
    else run_threaded();
    const std::int64_t k = learner_.updates();
    if (summary_.checkpoints.empty() || k != last_checkpoint_) checkpoint();
    summary_.env_steps = env_steps_.load();
    summary_.updates = learner_.updates();
    summary_.episodes = episodes_.load();
    return summary_;
  }

 private:
  bool update_budget_reached() const {
    return setup_.trainer.update_budget > 0 && learner_.updates() >= setup_.trainer.update_budget;
  }

  std::size_t ready_size() const {
    return std::max<std::size_t>(static_cast<std::size_t>(setup_.trainer.warmup),
                                 static_cast<std::size_t>(setup_.sac.batch_size));
  }

  void record(const Collected& c) {
    if (c.episode) {
      episode_log_.write(episode_json(*c.episode));
      ++episodes_;
    }
  }

  void learner_step() {
    const SampledBatch sb = global_.sample(static_cast<std::size_t>(setup_.sac.batch_size), sample_rng_);
    sac::TrainingBatch batch;
    for (const auto& t : sb.items) batch.items.push_back(t.get());
    batch.weights = sb.weights;
    const sac::UpdateResult res = learner_.update(batch, learner_rng_, phi_rng_);
    global_.update_priorities(sb.ids, res.td_errors);
    const std::int64_t k = learner_.updates();
    std::optional<double> wall;
    if (!setup_.trainer.deterministic)
      wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    train_log_.write(loss_json(k, env_steps_.load(), global_.size(), res.report, wall));
    if (k % setup_.trainer.publish_every == 0) publish();
    if (setup_.trainer.checkpoint_every > 0 && k % setup_.trainer.checkpoint_every == 0) checkpoint();
  }

  void publish() {
    auto snap = std::make_shared<const nn::PolicyNet<float>>(learner_.nets().policy);
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(snap);
  }

  PolicySnapshot snapshot() {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
  }

  void checkpoint() {
    const fs::path dir = dir_ / "checkpoints";
    fs::create_directories(dir);
    std::ostringstream name;
    name << "update_" << std::setw(8) << std::setfill('0') << learner_.updates() << ".bin";
    const fs::path path = dir / name.str();
    save_checkpoint(path.string(), learner_.nets(), learner_.log_alpha_params());
    summary_.checkpoints.push_back(path.string());
    last_checkpoint_ = learner_.updates();
  }

  void run_deterministic() {
    const auto& tc = setup_.trainer;
    std::optional<std::int64_t> learning_start;
    while (env_steps_ < tc.step_budget && !update_budget_reached()) {
      for (auto& actor : actors_) {
        if (env_steps_ >= tc.step_budget || update_budget_reached()) break;
        PolicySnapshot policy = snapshot_;
        record(actor->step(*policy, global_));
        ++env_steps_;
        if (!learning_start && global_.size() >= ready_size()) learning_start = env_steps_.load();
        if (learning_start && (env_steps_ - *learning_start) % tc.env_steps_per_update == 0) learner_step();
      }
    }
  }

  void run_threaded() {
    const auto& tc = setup_.trainer;
    std::atomic<bool> stop{false};
    std::atomic<std::int64_t> learning_start{-1};
    std::atomic<std::int64_t> updates_done{0};
    std::atomic<int> actors_running{static_cast<int>(actors_.size())};
    std::mutex err_mutex;
    std::exception_ptr error;
    auto fail = [&](std::exception_ptr e) {
      std::lock_guard lock(err_mutex);
      if (!error) error = e;
      stop = true;
    };

    std::vector<std::thread> threads;
    for (auto& actor_ptr : actors_) {
      Actor* actor = actor_ptr.get();
      threads.emplace_back([&, actor] {
        try {
          while (!stop) {
            const std::int64_t start = learning_start.load();
            if (start >= 0 && env_steps_.load() - start >= (updates_done.load() + 2) * tc.env_steps_per_update) {
              std::this_thread::sleep_for(std::chrono::microseconds(200));
              continue;
            }
            if (env_steps_.fetch_add(1) >= tc.step_budget) {
              --env_steps_;
              break;
            }
            record(actor->step(*snapshot(), global_));
          }
        } catch (...) {
          fail(std::current_exception());
        }
        --actors_running;
      });
    }

    try {
      while (!stop) {
        if (update_budget_reached()) break;
        if (learning_start < 0) {
          if (global_.size() >= ready_size()) learning_start = env_steps_.load();
          else if (actors_running == 0) break;
          else {
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
            continue;
          }
        }
        const std::int64_t target = (env_steps_.load() - learning_start) / tc.env_steps_per_update + 1;
        if (learner_.updates() < target) {
          learner_step();
          updates_done = learner_.updates();
        } else if (actors_running == 0) {
          break;
        } else {
          std::this_thread::sleep_for(std::chrono::microseconds(200));
        }
      }
    } catch (...) {
      fail(std::current_exception());
    }
    stop = true;
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
  }

  const TrainingSetup& setup_;
  Rng master_;
  sac::Learner<float> learner_;
  Rng learner_rng_;
  Rng phi_rng_;
  Rng sample_rng_;
  GlobalBuffer global_;
  fs::path dir_;
  JsonlWriter train_log_;
  JsonlWriter episode_log_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::unique_ptr<Actor>> actors_;
  std::mutex snapshot_mutex_;
  PolicySnapshot snapshot_;
  std::atomic<std::int64_t> env_steps_{0};
  std::atomic<std::int64_t> episodes_{0};
  std::int64_t last_checkpoint_ = -1;
  TrainingSummary summary_;
};

}  // namespace

void save_checkpoint(const std::string& path, const nn::Networks<float>& nets, const nn::ParamSet<float>& log_alpha) {
  nn::save_bundle(path, bundle_views(nets, log_alpha));
}

void load_checkpoint(const std::string& path, nn::Networks<float>& nets, nn::ParamSet<float>& log_alpha) {
  nn::load_bundle(path, {{"policy", &nets.policy.params},
                         {"critic1", &nets.critic1.params},
                         {"critic2", &nets.critic2.params},
                         {"target1", &nets.target1.params},
                         {"target2", &nets.target2.params},
                         {"log_alpha", &log_alpha}});
}

nn::PolicyNet<float> load_policy(const std::string& path, int height, int width, const nn::ArchConfig& arch) {
  nn::Networks<float> nets = nn::build_networks<float>(height, width, arch, 0);
  nn::ParamSet<float> log_alpha = log_alpha_layout();
  load_checkpoint(path, nets, log_alpha);
  return nets.policy;
}

TrainingSummary run_training(const TrainingSetup& setup) {
  if (!setup.track) throw ConfigError("training needs a track");
  setup.env.validate();
  setup.sac.validate();
  setup.caps.validate();
  setup.arch.validate();
  setup.replay.validate();
  setup.trainer.validate();
  if (setup.replay.global_capacity < static_cast<std::size_t>(setup.sac.batch_size))
    throw ConfigError("replay.global_capacity must be >= sac.batch_size");
  if (static_cast<std::uint64_t>(setup.trainer.warmup) > setup.replay.global_capacity)
    throw ConfigError("replay.warmup must not exceed replay.global_capacity");
  fs::create_directories(setup.out_dir);
  Run run(setup);
  return run.run();
}

}  // namespace caps::replay
