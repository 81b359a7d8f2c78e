#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "caps/harness/config.hpp"
#include "caps/harness/presets.hpp"
#include "caps/replay/trainer.hpp"
#include "caps/util/errors.hpp"
#include "json.hpp"
#include "support/oracles.hpp"

using namespace caps;
using namespace caps::replay;
namespace fs = std::filesystem;

namespace {

harness::ExperimentConfig tiny(std::string_view preset_name) {
  auto c = harness::preset(preset_name);
  c.arch = {{{4, 4, 2}, {4, 3, 2}}, 16, 0.01};
  c.sac.batch_size = 8;
  c.warmup = 32;
  c.replay.global_capacity = 500;
  c.replay.local_capacity = 40;
  c.replay.flush_every = 10;
  c.run.step_budget = 240;
  c.run.publish_every = 5;
  c.run.checkpoint_every = 0;
  c.run.deterministic = true;
  c.run.workers = 2;
  c.env.max_episode_steps = 60;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<nlohmann::json> jsonl(const fs::path& p) {
  std::vector<nlohmann::json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

TrainingSummary train(harness::ExperimentConfig c, const fs::path& dir) {
  c.out_dir = dir.string();
  return run_training(harness::make_training_setup(c));
}

}  // namespace

TEST(Trainer, DeterministicRunsAreByteIdentical) {
  const auto a = oracle::fresh_dir("trainer_det_a"), b = oracle::fresh_dir("trainer_det_b");
  const auto sa = train(tiny("sac_caps"), a);
  const auto sb = train(tiny("sac_caps"), b);
  EXPECT_EQ(sa.updates, sb.updates);
  EXPECT_GT(sa.updates, 0);
  EXPECT_EQ(slurp(a / "train_log.jsonl"), slurp(b / "train_log.jsonl"));
  EXPECT_EQ(slurp(a / "episodes.jsonl"), slurp(b / "episodes.jsonl"));
  EXPECT_EQ(slurp(sa.checkpoints.back()), slurp(sb.checkpoints.back()));
  for (const auto& j : jsonl(a / "train_log.jsonl")) EXPECT_FALSE(j.contains("wall_clock_s"));
}

TEST(Trainer, UpdateCadenceFollowsStepsPerUpdate) {
  const auto dir = oracle::fresh_dir("trainer_cadence");
  auto c = tiny("sac_only");
  const auto s = train(c, dir);
  EXPECT_EQ(s.env_steps, 240);
  const auto log = jsonl(dir / "train_log.jsonl");
  ASSERT_EQ(static_cast<std::int64_t>(log.size()), s.updates);
  for (std::size_t i = 1; i < log.size(); ++i)
    EXPECT_EQ(log[i]["env_steps"].get<int>() - log[i - 1]["env_steps"].get<int>(), c.run.env_steps_per_update);
  EXPECT_GE(log.front()["buffer_size"].get<int>(), 32);
}

TEST(Trainer, ThreadedWorkersAllContribute) {
  const auto dir = oracle::fresh_dir("trainer_threads");
  auto c = tiny("sac_only");
  c.run.deterministic = false;
  c.run.workers = 3;
  c.run.step_budget = 600;
  c.env.max_episode_steps = 30;
  const auto s = train(c, dir);
  EXPECT_EQ(s.env_steps, 600);
  std::set<int> actors;
  std::int64_t steps = 0;
  for (const auto& j : jsonl(dir / "episodes.jsonl")) {
    actors.insert(j["actor_id"].get<int>());
    steps += j["steps"].get<int>();
  }
  EXPECT_EQ(actors, (std::set<int>{0, 1, 2}));
  EXPECT_LE(steps, s.env_steps);
  EXPECT_EQ(static_cast<std::int64_t>(jsonl(dir / "episodes.jsonl").size()), s.episodes);
  for (const auto& j : jsonl(dir / "train_log.jsonl")) EXPECT_TRUE(j.contains("wall_clock_s"));
}

TEST(Trainer, ZeroBudgetKeepsOnlyInitialCheckpoint) {
  const auto dir = oracle::fresh_dir("trainer_zero");
  auto c = tiny("sac_only");
  c.run.step_budget = 0;
  const auto s = train(c, dir);
  EXPECT_EQ(s.updates, 0);
  ASSERT_EQ(s.checkpoints.size(), 1u);
  EXPECT_TRUE(fs::exists(s.checkpoints[0]));
}

TEST(Trainer, CheckpointRestoresTheLearnerState) {
  const auto dir = oracle::fresh_dir("trainer_ckpt");
  auto c = tiny("sac_caps");
  c.run.checkpoint_every = 10;
  const auto s = train(c, dir);
  ASSERT_GE(s.checkpoints.size(), 3u);
  auto nets = nn::build_networks<float>(c.env.camera.height, c.env.camera.width, c.arch, 77);
  const auto policy = load_policy(s.checkpoints.back(), c.env.camera.height, c.env.camera.width, c.arch);
  EXPECT_FALSE(policy.params == nets.policy.params);
  auto wrong = c.arch;
  wrong.hidden = 24;
  EXPECT_THROW(load_policy(s.checkpoints.back(), c.env.camera.height, c.env.camera.width, wrong), ShapeError);
}

TEST(Trainer, InvalidSetupIsConfigError) {
  auto c = tiny("sac_only");
  c.warmup = 100000;
  c.out_dir = oracle::fresh_dir("trainer_bad").string();
  EXPECT_THROW(run_training(harness::make_training_setup(c)), ConfigError);
}

TEST(Trainer, EpisodeJsonUsesNullForMissingLapTime) {
  EpisodeRecord r;
  r.lap_time_s = std::numeric_limits<double>::quiet_NaN();
  const auto j = nlohmann::json::parse(episode_json(r));
  EXPECT_TRUE(j["lap_time_s"].is_null());
  EXPECT_EQ(j["done_reason"], "timeout");
}
