#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "caps/harness/config.hpp"
#include "caps/harness/evaluate.hpp"

namespace caps::harness {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Cell {
  std::string label;
  ExperimentConfig config;
};

// lambda_t grid with lambda_s = 0; one cell per (value, seed).
std::vector<Cell> sweep_cells(const ExperimentConfig& base, const std::vector<double>& values,
                              const std::vector<std::uint64_t>& seeds);

// Full Phi plus one leave-one-out configuration per Phi method; one seed.
// Throws ConfigError unless all six methods are enabled in `base`.
std::vector<Cell> ablation_configs(const ExperimentConfig& base);

// Trains `cfg` into cfg.out_dir (config.json, logs, checkpoints) and returns the final checkpoint path.
std::string train_run(const ExperimentConfig& cfg);

int run_cli(int argc, char** argv);

}  // namespace caps::harness
