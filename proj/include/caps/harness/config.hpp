#pragma once

// Experiment configuration: JSON document with nested sections, strict key
// checking, dotted `key=value` overrides, presets, and a published schema.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "caps/augment/perturb.hpp"
#include "caps/env/racing_env.hpp"
#include "caps/nn/networks.hpp"
#include "caps/replay/trainer.hpp"
#include "caps/sac/learner.hpp"
#include "json.hpp"

namespace caps::harness {

struct EvaluateConfig {
  int runs = 15;
  std::string speed_preset = "c1";  // c1, c2, c3 or "train" for env.speed
  std::uint64_t seed = 1000;
  bool jitter = true;
};

struct SweepConfig {
  std::vector<double> lambda_t_values{0.5, 0.8, 1.0, 1.3};
  std::vector<std::uint64_t> seeds{1};
};

struct MetricsConfig {
  std::string units = "normalized";  // or "physical": degrees and m/s
  bool remove_mean = false;
};

struct ExperimentConfig {
  std::string preset = "custom";
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";
  std::string track = "builtin:default";
  env::EnvConfig env;
  sac::SacConfig sac;
  double lambda_t = 0.0;
  double lambda_s = 0.0;
  bool sampled_caps_actions = false;
  augment::PerturbationConfig augment;
  replay::ReplayConfig replay;
  std::int64_t warmup = 5000;
  nn::ArchConfig arch;
  replay::TrainerConfig run;  // seed and warmup are taken from the fields above
  EvaluateConfig evaluate;
  SweepConfig sweep;
  MetricsConfig metrics;

  // Throws ConfigError naming the offending key.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Strict: unknown keys and wrong types raise ConfigError with the dotted path.
ExperimentConfig from_json(const nlohmann::json& j);

ExperimentConfig load_config_file(const std::string& path);

// "a.b.c=value"; value parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

// JSON Schema (draft 2020-12) describing the config document.
nlohmann::json experiment_schema();

env::SpeedConfig speed_preset(std::string_view name);  // c1, c2, c3
std::vector<std::string> speed_preset_names();

// Resolves "builtin:default" or a file path.
std::shared_ptr<const env::TrackSpec> load_track_ref(const std::string& ref);

replay::TrainingSetup make_training_setup(const ExperimentConfig& cfg);

}  // namespace caps::harness
