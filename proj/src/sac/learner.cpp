#include "caps/sac/learner.hpp"

#include <algorithm>
#include <cmath>

namespace caps::sac {

using nn::Batch;
using nn::kActionDims;

void SacConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("sac.gamma must lie in (0, 1)");
  if (n_step < 1) throw ConfigError("sac.n_step must be >= 1");
  if (!(alpha_init > 0.0) || !std::isfinite(alpha_init)) throw ConfigError("sac.alpha_init must be positive");
  if (!std::isfinite(target_entropy)) throw ConfigError("sac.target_entropy must be finite");
  if (batch_size < 1) throw ConfigError("sac.batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("sac.lr must be positive");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("sac.tau must lie in [0, 1]");
}

void CapsConfig::validate() const {
  if (!(lambda_t >= 0.0) || !std::isfinite(lambda_t)) throw ConfigError("caps.lambda_t must be finite and >= 0");
  if (!(lambda_s >= 0.0) || !std::isfinite(lambda_s)) throw ConfigError("caps.lambda_s must be finite and >= 0");
  if (lambda_s > 0.0 && phi.phi_enabled.empty())
    throw ConfigError("caps.lambda_s > 0 needs at least one perturbation in augment.phi_enabled");
  phi.validate();
}

double mean_action_distance(const std::vector<std::array<double, 2>>& a,
                            const std::vector<std::array<double, 2>>& b) {
  if (a.size() != b.size()) throw ShapeError("action batches differ in length");
  if (a.empty()) throw ShapeError("empty action batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::hypot(a[i][0] - b[i][0], a[i][1] - b[i][1]);
  return sum / static_cast<double>(a.size());
}

StackedObs perturb_stacked(const StackedObs& obs, const augment::PerturbationConfig& phi, Rng& rng) {
  const auto params = augment::sample_phi_params(phi, rng);
  auto current = std::make_shared<const Image>(augment::apply_all(params, *obs.current, phi));
  if (obs.previous == obs.current) return {current, current};
  auto previous = std::make_shared<const Image>(augment::apply_all(params, *obs.previous, phi));
  return {previous, current};
}

namespace {

// Per-row action draw from a raw policy head output. eps = 0 gives tanh(mean).
struct RowAction {
  std::array<double, kActionDims> action{};
  std::array<double, kActionDims> eps{};
  std::array<double, kActionDims> std_dev{};
  std::array<bool, kActionDims> log_std_free{};  // false where the clamp is active
  double log_prob = 0.0;
};

template <class T>
RowAction row_action(const Batch<T>& raw, int r, const std::array<double, kActionDims>& eps) {
  const nn::PolicyOutput out = nn::PolicyNet<T>::row_output(raw, r);
  const nn::SquashedDraw d = nn::squashed_draw(out, eps);
  RowAction ra;
  ra.action = d.action;
  ra.eps = eps;
  ra.std_dev = d.std_dev;
  ra.log_prob = d.log_prob;
  for (int i = 0; i < kActionDims; ++i) {
    const double v = static_cast<double>(raw(r, kActionDims + i));
    ra.log_std_free[static_cast<std::size_t>(i)] = v >= nn::kLogStdMin && v <= nn::kLogStdMax;
  }
  return ra;
}

std::array<double, kActionDims> draw_eps(Rng& rng) {
  std::array<double, kActionDims> e{};
  for (auto& v : e) v = rng.normal();
  return e;
}

// Adds the raw-output gradient implied by dL/d(action) for one row.
template <class T>
void push_action_grad(Batch<T>& d_raw, int r, const RowAction& ra, const std::array<double, kActionDims>& d_action) {
  for (int i = 0; i < kActionDims; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double a = ra.action[k];
    const double du = d_action[k] * (1.0 - a * a);
    d_raw(r, i) += static_cast<T>(du);
    if (ra.eps[k] != 0.0 && ra.log_std_free[k]) d_raw(r, kActionDims + i) += static_cast<T>(du * ra.std_dev[k] * ra.eps[k]);
  }
}

template <class T>
Batch<T> actions_batch(const std::vector<RowAction>& rows) {
  Batch<T> b(static_cast<int>(rows.size()), kActionDims);
  for (int r = 0; r < b.rows; ++r)
    for (int i = 0; i < kActionDims; ++i) b(r, i) = static_cast<T>(rows[static_cast<std::size_t>(r)].action[static_cast<std::size_t>(i)]);
  return b;
}

// Mean Euclidean distance between two action sets; when `lambda` is nonzero the
// scaled gradient is pushed into both raw-output gradient batches.
template <class T>
double distance_term(const std::vector<RowAction>& a, const std::vector<RowAction>& b, double lambda, Batch<T>* d_a,
                     Batch<T>* d_b) {
  const double n = static_cast<double>(a.size());
  double sum = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    std::array<double, kActionDims> diff{};
    for (std::size_t i = 0; i < kActionDims; ++i) diff[i] = a[r].action[i] - b[r].action[i];
    const double d = std::hypot(diff[0], diff[1]);
    sum += d;
    if (lambda != 0.0 && d_a && d > 0.0) {
      std::array<double, kActionDims> ga{}, gb{};
      for (std::size_t i = 0; i < kActionDims; ++i) {
        ga[i] = lambda * diff[i] / (d * n);
        gb[i] = -ga[i];
      }
      push_action_grad(*d_a, static_cast<int>(r), a[r], ga);
      push_action_grad(*d_b, static_cast<int>(r), b[r], gb);
    }
  }
  return sum / n;
}

std::vector<std::array<double, 2>> tanh_means(const Batch<float>& raw) {
  std::vector<std::array<double, 2>> out(static_cast<std::size_t>(raw.rows));
  for (int r = 0; r < raw.rows; ++r)
    for (int i = 0; i < kActionDims; ++i) out[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] = std::tanh(static_cast<double>(raw(r, i)));
  return out;
}

std::vector<std::array<double, 2>> tanh_means(const Batch<double>& raw) {
  std::vector<std::array<double, 2>> out(static_cast<std::size_t>(raw.rows));
  for (int r = 0; r < raw.rows; ++r)
    for (int i = 0; i < kActionDims; ++i) out[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] = std::tanh(raw(r, i));
  return out;
}

}  // namespace

template <class T>
Learner<T>::Learner(nn::Networks<T> nets, const SacConfig& sac, const CapsConfig& caps)
    : nets_(std::move(nets)),
      sac_(sac),
      caps_(caps),
      log_alpha_([&] {
        nn::ParamSet<T> p;
        p.add("log_alpha", {1});
        p[0].values[0] = static_cast<T>(std::log(sac.alpha_init));
        return p;
      }()),
      policy_opt_(nets_.policy.params, {sac.lr, 0.9, 0.999, 1e-8}),
      critic1_opt_(nets_.critic1.params, {sac.lr, 0.9, 0.999, 1e-8}),
      critic2_opt_(nets_.critic2.params, {sac.lr, 0.9, 0.999, 1e-8}),
      alpha_opt_(log_alpha_, {sac.lr, 0.9, 0.999, 1e-8}) {
  sac_.validate();
  caps_.validate();
}

template <class T>
double Learner<T>::alpha() const {
  return std::exp(static_cast<double>(log_alpha_[0].values[0]));
}

template <class T>
UpdateResult Learner<T>::compute(const TrainingBatch& batch, Rng& rng, Rng& phi_rng, Gradients<T>* grads) const {
  const auto& items = batch.items;
  const int n = static_cast<int>(items.size());
  if (n != sac_.batch_size)
    throw ShapeError("batch holds " + std::to_string(n) + " transitions, config expects " + std::to_string(sac_.batch_size));
  if (!batch.weights.empty() && batch.weights.size() != items.size()) throw ShapeError("importance weights length mismatch");
  const double nd = static_cast<double>(n);
  const nn::Shape3 in = nets_.policy.input_shape();
  const double alpha = this->alpha();

  std::vector<const StackedObs*> s, boot, succ;
  for (const auto* t : items) {
    s.push_back(&t->obs);
    boot.push_back(&t->bootstrap_obs);
    succ.push_back(&t->successor_obs);
  }
  const Batch<T> x_s = nn::make_input<T>(s, in);

  UpdateResult result;
  LossReport& rep = result.report;
  rep.alpha = alpha;

  // Critic targets from the target critics at s_{t+m} with a fresh policy sample.
  std::vector<double> y(static_cast<std::size_t>(n));
  {
    const Batch<T> x_b = nn::make_input<T>(boot, in);
    const Batch<T> raw_b = nets_.policy.forward(x_b, nullptr);
    std::vector<RowAction> act_b;
    for (int r = 0; r < n; ++r) act_b.push_back(row_action(raw_b, r, draw_eps(rng)));
    const Batch<T> a_b = actions_batch<T>(act_b);
    const Batch<T> q1 = nets_.target1.forward(x_b, a_b);
    const Batch<T> q2 = nets_.target2.forward(x_b, a_b);
    double sum_y = 0.0;
    for (int r = 0; r < n; ++r) {
      const auto& t = *items[static_cast<std::size_t>(r)];
      const double soft_v = std::min(static_cast<double>(q1(r, 0)), static_cast<double>(q2(r, 0))) -
                            alpha * act_b[static_cast<std::size_t>(r)].log_prob;
      const double disc = t.done ? 0.0 : std::pow(sac_.gamma, t.bootstrap_steps);
      y[static_cast<std::size_t>(r)] = t.n_step_return + disc * soft_v;
      sum_y += y[static_cast<std::size_t>(r)];
    }
    rep.mean_target_q = sum_y / nd;
  }

  // Critic regression on replayed actions. Encoders run once on s.
  Batch<T> a_replay(n, kActionDims);
  for (int r = 0; r < n; ++r)
    for (int i = 0; i < kActionDims; ++i) a_replay(r, i) = static_cast<T>(items[static_cast<std::size_t>(r)]->action[static_cast<std::size_t>(i)]);

  const nn::CriticNet<T>* critics[2] = {&nets_.critic1, &nets_.critic2};
  nn::ParamSet<T>* critic_grads[2] = {grads ? &grads->critic1 : nullptr, grads ? &grads->critic2 : nullptr};
  typename nn::CriticNet<T>::Tape enc_tape[2];
  Batch<T> feats[2];
  result.td_errors.assign(static_cast<std::size_t>(n), 0.0);
  double critic_loss = 0.0;
  for (int c = 0; c < 2; ++c) {
    feats[c] = critics[c]->encode(x_s, &enc_tape[c]);
    typename nn::CriticNet<T>::Tape head_tape;
    const Batch<T> q = critics[c]->head(feats[c], a_replay, &head_tape);
    Batch<T> dq(n, 1);
    double loss = 0.0;
    for (int r = 0; r < n; ++r) {
      const double w = batch.weights.empty() ? 1.0 : batch.weights[static_cast<std::size_t>(r)];
      const double err = static_cast<double>(q(r, 0)) - y[static_cast<std::size_t>(r)];
      loss += w * err * err;
      dq(r, 0) = static_cast<T>(2.0 * w * err / nd);
      result.td_errors[static_cast<std::size_t>(r)] += 0.5 * std::fabs(err);
    }
    critic_loss += loss / nd;
    if (critic_grads[c]) {
      const Batch<T> d_cat = critics[c]->head_backward(head_tape, dq, critic_grads[c]);
      critics[c]->encode_backward(enc_tape[c], d_cat, *critic_grads[c]);
    }
  }
  rep.critic_loss = critic_loss;

  // Policy objective with reparameterized samples at s.
  typename nn::PolicyNet<T>::Tape policy_tape;
  const Batch<T> raw = nets_.policy.forward(x_s, &policy_tape);
  std::vector<RowAction> act_pi;
  for (int r = 0; r < n; ++r) act_pi.push_back(row_action(raw, r, draw_eps(rng)));
  const Batch<T> a_pi = actions_batch<T>(act_pi);
  typename nn::CriticNet<T>::Tape pi_head_tape[2];
  const Batch<T> q1p = nets_.critic1.head(feats[0], a_pi, &pi_head_tape[0]);
  const Batch<T> q2p = nets_.critic2.head(feats[1], a_pi, &pi_head_tape[1]);
  double policy_loss = 0.0, sum_log_prob = 0.0;
  Batch<T> dq_sel[2] = {Batch<T>(n, 1), Batch<T>(n, 1)};
  for (int r = 0; r < n; ++r) {
    const double lp = act_pi[static_cast<std::size_t>(r)].log_prob;
    const bool first = q1p(r, 0) <= q2p(r, 0);
    const double min_q = first ? static_cast<double>(q1p(r, 0)) : static_cast<double>(q2p(r, 0));
    policy_loss += alpha * lp - min_q;
    sum_log_prob += lp;
    dq_sel[first ? 0 : 1](r, 0) = static_cast<T>(-1.0 / nd);
  }
  rep.policy_loss = policy_loss / nd;

  Batch<T> d_raw(n, 2 * kActionDims);
  if (grads) {
    const Batch<T> dc1 = nets_.critic1.head_backward(pi_head_tape[0], dq_sel[0], nullptr);
    const Batch<T> dc2 = nets_.critic2.head_backward(pi_head_tape[1], dq_sel[1], nullptr);
    const int f = nets_.critic1.feature_size();
    for (int r = 0; r < n; ++r) {
      const RowAction& ra = act_pi[static_cast<std::size_t>(r)];
      for (int i = 0; i < kActionDims; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const double a = ra.action[k];
        const double dq_da = static_cast<double>(dc1(r, f + i)) + static_cast<double>(dc2(r, f + i));
        const double du = alpha * 2.0 * a / nd + dq_da * (1.0 - a * a);
        d_raw(r, i) += static_cast<T>(du);
        if (ra.log_std_free[k]) d_raw(r, kActionDims + i) += static_cast<T>(-alpha / nd + du * ra.std_dev[k] * ra.eps[k]);
      }
    }
  }

  // CAPS regularizers between actions at s and at s_{t+1} / Phi(s).
  const bool sampled = caps_.sampled_actions;
  std::vector<RowAction> act_s;
  if (sampled) {
    act_s = act_pi;
  } else {
    for (int r = 0; r < n; ++r) act_s.push_back(row_action(raw, r, {}));
  }
  auto branch_actions = [&](const Batch<T>& raw_branch) {
    std::vector<RowAction> out;
    for (int r = 0; r < n; ++r)
      out.push_back(row_action(raw_branch, r, sampled ? draw_eps(rng) : std::array<double, kActionDims>{}));
    return out;
  };

  auto regularizer = [&](const Batch<T>& x_branch, double lambda) {
    typename nn::PolicyNet<T>::Tape tape;
    const bool need_grad = grads && lambda != 0.0;
    const Batch<T> raw_branch = nets_.policy.forward(x_branch, need_grad ? &tape : nullptr);
    const auto act_branch = branch_actions(raw_branch);
    Batch<T> d_branch(n, 2 * kActionDims);
    const double value = distance_term<T>(act_s, act_branch, need_grad ? lambda : 0.0, need_grad ? &d_raw : nullptr,
                                          need_grad ? &d_branch : nullptr);
    if (need_grad) nets_.policy.backward(tape, d_branch, grads->policy);
    return value;
  };

  rep.l_temporal = regularizer(nn::make_input<T>(succ, in), caps_.lambda_t);

  if (!caps_.phi.phi_enabled.empty()) {
    std::vector<StackedObs> perturbed;
    perturbed.reserve(static_cast<std::size_t>(n));
    for (const auto* obs : s) perturbed.push_back(perturb_stacked(*obs, caps_.phi, phi_rng));
    std::vector<const StackedObs*> ptrs;
    for (const auto& p : perturbed) ptrs.push_back(&p);
    rep.l_spatial = regularizer(nn::make_input<T>(ptrs, in), caps_.lambda_s);
  }

  rep.total_policy_objective = rep.policy_loss + caps_.lambda_t * rep.l_temporal + caps_.lambda_s * rep.l_spatial;

  const std::pair<const char*, double> checks[] = {{"mean_target_q", rep.mean_target_q},
                                                   {"critic_loss", rep.critic_loss},
                                                   {"policy_loss", rep.policy_loss},
                                                   {"l_temporal", rep.l_temporal},
                                                   {"l_spatial", rep.l_spatial},
                                                   {"total_policy_objective", rep.total_policy_objective}};
  for (const auto& [name, v] : checks)
    if (!std::isfinite(v)) throw UpdateAborted(name, rep);

  if (grads) {
    nets_.policy.backward(policy_tape, d_raw, grads->policy);
    grads->log_alpha =
        sac_.auto_alpha ? static_cast<T>(-alpha * (sum_log_prob / nd + sac_.target_entropy)) : T(0);
  }
  return result;
}

template <class T>
UpdateResult Learner<T>::update(const TrainingBatch& batch, Rng& rng, Rng& phi_rng) {
  Gradients<T> g{nets_.policy.params.zeros_like(), nets_.critic1.params.zeros_like(),
                 nets_.critic2.params.zeros_like(), T(0)};
  UpdateResult result = compute(batch, rng, phi_rng, &g);
  g.critic1.check_finite("critic1 gradient");
  g.critic2.check_finite("critic2 gradient");
  g.policy.check_finite("policy gradient");
  if (!std::isfinite(static_cast<double>(g.log_alpha))) throw NumericError("gradient: non-finite value in parameter 'log_alpha'");

  critic1_opt_.step(nets_.critic1.params, g.critic1);
  critic2_opt_.step(nets_.critic2.params, g.critic2);
  policy_opt_.step(nets_.policy.params, g.policy);
  if (sac_.auto_alpha) {
    nn::ParamSet<T> ga = log_alpha_.zeros_like();
    ga[0].values[0] = g.log_alpha;
    alpha_opt_.step(log_alpha_, ga);
  }
  nn::soft_update(nets_.target1.params, nets_.critic1.params, sac_.tau);
  nn::soft_update(nets_.target2.params, nets_.critic2.params, sac_.tau);
  ++updates_;
  return result;
}

template <class T>
double temporal_loss(const nn::PolicyNet<T>& policy, const std::vector<const StackedObs*>& s_t,
                     const std::vector<const StackedObs*>& s_t1) {
  if (s_t.size() != s_t1.size()) throw ShapeError("temporal_loss: batch length mismatch");
  const auto a = tanh_means(policy.forward(nn::make_input<T>(s_t, policy.input_shape()), nullptr));
  const auto b = tanh_means(policy.forward(nn::make_input<T>(s_t1, policy.input_shape()), nullptr));
  return mean_action_distance(a, b);
}

template <class T>
double spatial_loss(const nn::PolicyNet<T>& policy, const std::vector<const StackedObs*>& s_t,
                    const augment::PerturbationConfig& phi, Rng& rng) {
  if (phi.phi_enabled.empty()) throw ConfigError("spatial_loss: no perturbation enabled");
  std::vector<StackedObs> perturbed;
  for (const auto* obs : s_t) perturbed.push_back(perturb_stacked(*obs, phi, rng));
  std::vector<const StackedObs*> ptrs;
  for (const auto& p : perturbed) ptrs.push_back(&p);
  const auto a = tanh_means(policy.forward(nn::make_input<T>(s_t, policy.input_shape()), nullptr));
  const auto b = tanh_means(policy.forward(nn::make_input<T>(ptrs, policy.input_shape()), nullptr));
  return mean_action_distance(a, b);
}

template class Learner<float>;
template class Learner<double>;
template double temporal_loss<float>(const nn::PolicyNet<float>&, const std::vector<const StackedObs*>&,
                                     const std::vector<const StackedObs*>&);
template double temporal_loss<double>(const nn::PolicyNet<double>&, const std::vector<const StackedObs*>&,
                                      const std::vector<const StackedObs*>&);
template double spatial_loss<float>(const nn::PolicyNet<float>&, const std::vector<const StackedObs*>&,
                                    const augment::PerturbationConfig&, Rng&);
template double spatial_loss<double>(const nn::PolicyNet<double>&, const std::vector<const StackedObs*>&,
                                     const augment::PerturbationConfig&, Rng&);

}  // namespace caps::sac
