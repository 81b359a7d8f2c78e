#pragma once

// SAC learner with the CAPS temporal and spatial policy regularizers.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "caps/augment/perturb.hpp"
#include "caps/nn/networks.hpp"
#include "caps/replay/transition.hpp"
#include "caps/util/errors.hpp"
#include "caps/util/rng.hpp"

namespace caps::sac {

struct SacConfig {
  double gamma = 0.98;
  int n_step = 4;
  double alpha_init = 0.3;
  bool auto_alpha = true;
  double target_entropy = -2.0;
  int batch_size = 512;
  double lr = 3e-4;
  double tau = 0.005;
  void validate() const;
};

struct CapsConfig {
  double lambda_t = 0.0;
  double lambda_s = 0.0;
  bool sampled_actions = false;  // distances between sampled instead of tanh(mean) actions
  augment::PerturbationConfig phi;
  void validate() const;
};

struct LossReport {
  double critic_loss = 0.0;  // sum of both critics' weighted MSE
  double policy_loss = 0.0;  // E[alpha log pi - min Q]
  double l_temporal = 0.0;
  double l_spatial = 0.0;
  double alpha = 0.0;
  double total_policy_objective = 0.0;  // policy_loss + lambda_t l_temporal + lambda_s l_spatial
  double mean_target_q = 0.0;
};

class UpdateAborted : public NumericError {
 public:
  UpdateAborted(const std::string& component, const LossReport& report)
      : NumericError("non-finite " + component + " aborted the update"), component_(component), report_(report) {}
  const std::string& component() const { return component_; }
  const LossReport& report() const { return report_; }

 private:
  std::string component_;
  LossReport report_;
};

struct TrainingBatch {
  std::vector<const replay::Transition*> items;
  std::vector<double> weights;  // importance weights; empty means all 1
};

template <class T>
struct Gradients {
  nn::ParamSet<T> policy;
  nn::ParamSet<T> critic1;
  nn::ParamSet<T> critic2;
  T log_alpha = T(0);
};

struct UpdateResult {
  LossReport report;
  std::vector<double> td_errors;  // |y - q| averaged over both critics, per item
};

// Mean Euclidean distance between paired rows of two action batches.
double mean_action_distance(const std::vector<std::array<double, 2>>& a,
                            const std::vector<std::array<double, 2>>& b);

// -coefficient * |steering in degrees|, steering normalized to [-1, 1].
double steering_penalty_reward(double steering, double coefficient, double steering_limit_rad);

template <class T>
class Learner {
 public:
  Learner(nn::Networks<T> nets, const SacConfig& sac, const CapsConfig& caps);

  // Loss components and gradients for the current parameters; no state changes.
  // rng draws policy samples, phi_rng draws spatial perturbations.
  UpdateResult compute(const TrainingBatch& batch, Rng& rng, Rng& phi_rng, Gradients<T>* grads) const;

  // One full update: critics, policy, alpha, then target smoothing.
  // Throws UpdateAborted before any parameter changes when a loss is non-finite.
  UpdateResult update(const TrainingBatch& batch, Rng& rng, Rng& phi_rng);

  double alpha() const;
  const nn::Networks<T>& nets() const { return nets_; }
  nn::Networks<T>& nets() { return nets_; }
  nn::ParamSet<T>& log_alpha_params() { return log_alpha_; }
  const nn::ParamSet<T>& log_alpha_params() const { return log_alpha_; }
  const SacConfig& sac_config() const { return sac_; }
  const CapsConfig& caps_config() const { return caps_; }
  CapsConfig& caps_config() { return caps_; }
  std::int64_t updates() const { return updates_; }

 private:
  nn::Networks<T> nets_;
  SacConfig sac_;
  CapsConfig caps_;
  nn::ParamSet<T> log_alpha_;
  nn::Adam<T> policy_opt_;
  nn::Adam<T> critic1_opt_;
  nn::Adam<T> critic2_opt_;
  nn::Adam<T> alpha_opt_;
  std::int64_t updates_ = 0;
};

// Convenience forms over a policy network alone, deterministic actions.
template <class T>
double temporal_loss(const nn::PolicyNet<T>& policy, const std::vector<const StackedObs*>& s_t,
                     const std::vector<const StackedObs*>& s_t1);

template <class T>
double spatial_loss(const nn::PolicyNet<T>& policy, const std::vector<const StackedObs*>& s_t,
                    const augment::PerturbationConfig& phi, Rng& rng);

// s' for a stacked observation: one parameter draw applied to both frames.
StackedObs perturb_stacked(const StackedObs& obs, const augment::PerturbationConfig& phi, Rng& rng);

}  // namespace caps::sac
