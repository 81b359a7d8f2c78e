// One PASS/FAIL line per acceptance criterion.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "caps/augment/perturb.hpp"
#include "caps/harness/commands.hpp"
#include "caps/harness/presets.hpp"
#include "caps/metrics/metrics.hpp"
#include "caps/replay/replay.hpp"
#include "caps/replay/trainer.hpp"
#include "caps/sac/learner.hpp"
#include "support/oracles.hpp"

using namespace caps;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

fs::path g_work;
std::int64_t g_slow_steps = 300000;
int g_slow_seeds = 3;

// ---- 1: gradients ------------------------------------------------------------

using nn::Batch;
using nn::ParamSet;

Batch<double> random_batch(Rng& rng, int rows, int cols) {
  Batch<double> b(rows, cols);
  for (auto& v : b.data) v = rng.uniform(-1, 1);
  return b;
}

double weighted_sum(const Batch<double>& y, const Batch<double>& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * c.data[i];
  return s;
}

struct ErrorTracker {
  double worst = 0.0;
  void params(ParamSet<double>& p, const ParamSet<double>& g, const std::function<double()>& f, Rng& rng, int per) {
    std::vector<double> a, n;
    for (std::size_t i = 0; i < p.size(); ++i)
      for (int k = 0; k < per; ++k) {
        const std::size_t idx = rng.index(p[i].values.size());
        a.push_back(g[i].values[idx]);
        n.push_back(oracle::central_difference(p[i].values[idx], 1e-6, f));
      }
    worst = std::max(worst, oracle::max_relative_error(a, n, 1e-6));
  }
  void inputs(Batch<double>& x, const Batch<double>& g, const std::function<double()>& f, Rng& rng, int count) {
    std::vector<double> a, n;
    for (int k = 0; k < count; ++k) {
      const std::size_t idx = rng.index(x.data.size());
      a.push_back(g.data[idx]);
      n.push_back(oracle::central_difference(x.data[idx], 1e-6, f));
    }
    worst = std::max(worst, oracle::max_relative_error(a, n, 1e-6));
  }
};

Outcome gradients() {
  Rng rng(101);
  ErrorTracker err;
  for (int trial = 0; trial < 5; ++trial) {
    const nn::Shape3 in{1 + static_cast<int>(rng.index(3)), 5 + static_cast<int>(rng.index(6)),
                        5 + static_cast<int>(rng.index(6))};
    ParamSet<double> p;
    nn::Conv2d<double> conv(in, 1 + static_cast<int>(rng.index(4)), 2 + static_cast<int>(rng.index(2)),
                            1 + static_cast<int>(rng.index(2)), p, "conv");
    conv.init(p, rng, 1.0);
    Batch<double> x = random_batch(rng, 2, in.size()), y;
    conv.forward(p, x, y);
    const Batch<double> c = random_batch(rng, y.rows, y.cols);
    auto f = [&] {
      Batch<double> o;
      conv.forward(p, x, o);
      return weighted_sum(o, c);
    };
    ParamSet<double> g = p.zeros_like();
    Batch<double> dx;
    conv.backward(p, x, c, &dx, &g);
    err.params(p, g, f, rng, 20);
    err.inputs(x, dx, f, rng, 30);
  }
  for (int trial = 0; trial < 5; ++trial) {
    const int in = 1 + static_cast<int>(rng.index(12)), out = 1 + static_cast<int>(rng.index(6));
    ParamSet<double> p;
    nn::Dense<double> dense(in, out, p, "fc");
    dense.init(p, rng, 1.0);
    Batch<double> x = random_batch(rng, 3, in);
    const Batch<double> c = random_batch(rng, 3, out);
    auto f = [&] {
      Batch<double> o;
      dense.forward(p, x, o);
      return weighted_sum(o, c);
    };
    ParamSet<double> g = p.zeros_like();
    Batch<double> dx;
    dense.backward(p, x, c, &dx, &g);
    err.params(p, g, f, rng, 20);
    err.inputs(x, dx, f, rng, 10);
  }
  {
    nn::Relu relu("relu");
    Batch<double> x = random_batch(rng, 4, 9);
    for (auto& v : x.data)
      if (std::fabs(v) < 1e-3) v = 0.5;
    const Batch<double> c = random_batch(rng, 4, 9);
    auto f = [&] {
      Batch<double> o;
      relu.forward(x, o);
      return weighted_sum(o, c);
    };
    Batch<double> y, dx;
    relu.forward(x, y);
    relu.backward(y, c, dx);
    err.inputs(x, dx, f, rng, 36);
  }
  // full policy and critic graphs through the learner
  const int h = 9, w = 11;
  sac::SacConfig sac;
  sac.batch_size = 4;
  sac::CapsConfig caps;
  caps.lambda_t = 0.7;
  caps.lambda_s = 1.3;
  sac::Learner<double> learner(nn::build_networks<double>(h, w, {{{4, 3, 2}, {5, 2, 1}}, 8, 0.5}, 102), sac, caps);
  std::vector<replay::Transition> ts;
  for (int i = 0; i < 4; ++i) {
    replay::Transition t;
    t.obs = oracle::random_stack(rng, h, w);
    t.successor_obs = oracle::random_stack(rng, h, w);
    t.bootstrap_obs = oracle::random_stack(rng, h, w);
    t.action = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    t.n_step_return = rng.uniform(-1, 2);
    t.done = i == 2;
    t.bootstrap_steps = 1 + i;
    ts.push_back(t);
  }
  sac::TrainingBatch batch;
  for (auto& t : ts) batch.items.push_back(&t);
  batch.weights = {1.0, 0.5, 0.8, 0.3};
  auto eval = [&](bool total) {
    Rng a(103), b(104);
    const auto r = learner.compute(batch, a, b, nullptr).report;
    return total ? r.total_policy_objective : r.critic_loss;
  };
  sac::Gradients<double> g{learner.nets().policy.params.zeros_like(), learner.nets().critic1.params.zeros_like(),
                           learner.nets().critic2.params.zeros_like(), 0.0};
  Rng a(103), b(104);
  learner.compute(batch, a, b, &g);
  err.params(learner.nets().policy.params, g.policy, [&] { return eval(true); }, rng, 10);
  err.params(learner.nets().critic1.params, g.critic1, [&] { return eval(false); }, rng, 10);
  err.params(learner.nets().critic2.params, g.critic2, [&] { return eval(false); }, rng, 10);
  return {err.worst <= 1e-4, "max relative error " + fmt(err.worst)};
}

// ---- 2: spectrum -------------------------------------------------------------

Outcome spectrum() {
  Rng rng(201);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int n = 16 + static_cast<int>(rng.index(1024 - 16 + 1));
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = rng.uniform(-1, 1);
    const auto fast = metrics::amplitude_spectrum(x, 30.0);
    const auto slow = oracle::naive_amplitudes(x, 30.0);
    if (fast.size() != slow.size()) return {false, "bin count differs at n=" + std::to_string(n)};
    for (std::size_t k = 0; k < fast.size(); ++k) worst = std::max(worst, std::fabs(fast[k].amplitude - slow[k].amplitude));
  }
  const double constant = metrics::smoothness_value(std::vector<double>(512, 0.42), 30.0);
  std::vector<double> sine;
  const double amp = 0.6;
  for (int t = 0; t < 512; ++t) sine.push_back(amp * std::cos(2 * std::numbers::pi * 37 * t / 512.0 + 0.3));
  const double bin = metrics::amplitude_spectrum(sine, 30.0)[36].amplitude;
  const bool ok = worst <= 1e-9 && constant <= 1e-12 && std::fabs(bin - amp) <= 1e-9;
  return {ok, "max |dM| " + fmt(worst) + ", constant S_m " + fmt(constant) + ", sinusoid M " + fmt(bin)};
}

// ---- 3: objective linearity --------------------------------------------------

Outcome linearity() {
  const int h = 12, w = 14;
  Rng rng(301);
  sac::SacConfig sac;
  sac.batch_size = 8;
  sac::Learner<double> learner(nn::build_networks<double>(h, w, {{{4, 3, 2}, {6, 3, 1}}, 16, 0.5}, 302), sac, {});
  std::vector<replay::Transition> ts;
  for (int i = 0; i < 8; ++i) {
    replay::Transition t;
    t.obs = oracle::random_stack(rng, h, w);
    t.successor_obs = oracle::random_stack(rng, h, w);
    t.bootstrap_obs = oracle::random_stack(rng, h, w);
    t.action = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    ts.push_back(t);
  }
  sac::TrainingBatch batch;
  for (auto& t : ts) batch.items.push_back(&t);
  double worst = 0.0;
  sac::LossReport base;
  for (double lt : {0.0, 1.0})
    for (double ls : {0.0, 1.0}) {
      learner.caps_config().lambda_t = lt;
      learner.caps_config().lambda_s = ls;
      Rng a(303), b(304);  // frozen samples and perturbations
      const auto r = learner.compute(batch, a, b, nullptr).report;
      if (lt == 0.0 && ls == 0.0) base = r;
      const double predicted = base.total_policy_objective + lt * base.l_temporal + ls * base.l_spatial;
      worst = std::max(worst, std::fabs(r.total_policy_objective - predicted));
      worst = std::max(worst, std::fabs(r.l_temporal - base.l_temporal) + std::fabs(r.l_spatial - base.l_spatial));
    }
  return {worst <= 1e-6 && base.l_temporal > 0 && base.l_spatial > 0,
          "max deviation " + fmt(worst) + " (l_T " + fmt(base.l_temporal) + ", l_S " + fmt(base.l_spatial) + ")"};
}

// ---- 4: distance arithmetic --------------------------------------------------

Outcome distance_arithmetic() {
  const double single = sac::mean_action_distance({{0, 0}}, {{3, 4}});
  const double mean = sac::mean_action_distance({{0, 0}, {0, 0}}, {{3, 4}, {0, 0}});
  const double both = sac::mean_action_distance({{0, 0}, {1, 1}}, {{3, 4}, {4, 5}});
  return {single == 5.0 && mean == 2.5 && both == 5.0, fmt(single) + ", " + fmt(mean) + ", " + fmt(both)};
}

// ---- 5: replay stress --------------------------------------------------------

Outcome replay_stress() {
  replay::ReplayConfig cfg;
  replay::GlobalBuffer g(cfg);
  Rng rng(501);
  double worst_rel = 0.0;
  bool capacity_ok = true;
  auto check_sum = [&] {
    const double rescan = g.rescan_sum();
    worst_rel = std::max(worst_rel, std::fabs(g.priority_sum() - rescan) / rescan);
  };
  for (int op = 0; op < 1000000; ++op) {
    const double u = rng.uniform();
    if (u < 0.5 || g.size() < 64) {
      std::vector<replay::Transition> batch(1 + rng.index(4));
      g.add_batch(std::move(batch));
    } else if (u < 0.75) {
      g.sample(64, rng);
    } else {
      std::vector<std::uint64_t> ids;
      std::vector<double> td;
      for (int k = 0; k < 16; ++k) {
        ids.push_back(rng.index(g.inserted()));
        td.push_back(rng.uniform(-5, 5) * (rng.uniform() < 0.05 ? 0.0 : 1.0));
      }
      g.update_priorities(ids, td);
    }
    capacity_ok = capacity_ok && g.size() <= 45000;
    if (op % 100000 == 99999) check_sum();
  }

  replay::ReplayConfig two;
  two.global_capacity = 2;
  two.local_capacity = 2;
  two.flush_every = 1;
  two.per_alpha = 1.0;
  replay::GlobalBuffer pb(two);
  pb.add_batch(std::vector<replay::Transition>(2));
  pb.update_priorities(std::vector<std::uint64_t>{0, 1}, std::vector<double>{3.0 - 1e-6, 1.0 - 1e-6});
  int first = 0;
  for (int i = 0; i < 100000; ++i) first += pb.sample(1, rng).ids[0] == 0;
  const double freq = first / 1e5;
  const bool ok = capacity_ok && worst_rel <= 1e-6 && std::fabs(freq - 0.75) <= 0.02;
  return {ok, "capacity " + std::string(capacity_ok ? "held" : "exceeded") + ", root/rescan rel " + fmt(worst_rel) +
                  ", p(first) " + fmt(freq)};
}

// ---- 6: n-step ---------------------------------------------------------------

Outcome n_step() {
  Rng rng(601);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int len = 1 + static_cast<int>(rng.index(8));
    std::vector<double> r;
    std::vector<bool> term, end;
    std::vector<replay::StepRecord> w;
    for (int i = 0; i < len; ++i) {
      replay::StepRecord s;
      s.reward = rng.uniform(-3, 3);
      s.episode_end = rng.uniform() < 0.2;
      s.terminal = s.episode_end && rng.uniform() < 0.5;
      r.push_back(s.reward);
      term.push_back(s.terminal);
      end.push_back(s.episode_end);
      w.push_back(s);
    }
    const double gamma = rng.uniform(0.5, 0.999);
    const int n = 1 + static_cast<int>(rng.index(6));
    const auto t = replay::make_n_step(w, gamma, n);
    const auto e = oracle::n_step_direct(r, term, end, gamma, n);
    mismatches += !(t.n_step_return == e.ret && t.bootstrap_steps == e.steps && t.done == e.done);
  }
  replay::StepRecord one;
  one.reward = 1.0;
  const double ones = replay::make_n_step(std::vector<replay::StepRecord>(4, one), 0.98, 4).n_step_return;
  return {mismatches == 0 && std::fabs(ones - 3.881592) <= 1e-9,
          std::to_string(mismatches) + " mismatches, all-ones " + fmt(ones)};
}

// ---- 7: determinism ----------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + CAPS_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str()) == 0;
}

Outcome determinism() {
  const std::string base =
      "train --preset sac_caps --seed 7 --set run.deterministic=true --set run.workers=1 --set run.step_budget=5000";
  // the default warmup equals the budget, so a second pair also exercises learner updates
  const std::vector<std::pair<std::string, std::string>> variants{
      {"default", base}, {"updates", base + " --set replay.warmup=1000 --set sac.batch_size=64"}};
  std::string detail;
  bool ok = true;
  for (const auto& [name, args] : variants) {
    std::string logs[2][2];
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = g_work / "determinism" / (name + "_" + std::to_string(rep));
      fs::remove_all(out);
      fs::create_directories(out);
      if (!cli(args + " --out \"" + out.string() + "\"", out / "cli.log"))
        return {false, name + " run failed, see " + (out / "cli.log").string()};
      logs[rep][0] = slurp(out / "train_log.jsonl");
      logs[rep][1] = slurp(out / "episodes.jsonl");
    }
    const bool same = logs[0][0] == logs[1][0] && logs[0][1] == logs[1][1] && !logs[0][1].empty();
    const auto updates = std::count(logs[0][0].begin(), logs[0][0].end(), '\n');
    ok = ok && same;
    detail += (detail.empty() ? "" : "; ") + name + ": " + (same ? "identical" : "differ") + " (" +
              std::to_string(updates) + " updates)";
  }
  return {ok, detail};
}

// ---- 8: augmentation identities ----------------------------------------------

Outcome augmentation() {
  using namespace augment;
  const PerturbationConfig cfg;
  Rng rng(801);
  int failures = 0;
  const std::vector<PerturbationParams> identity{BrightnessParams{1.0}, ContrastParams{1.0},  RotationParams{0.0},
                                                 SaltPepperParams{0.0, 0.5, 1}, BlurParams{0.0}, CutoffParams{0.0},
                                                 ReflectionParams{0.0}};
  for (int i = 0; i < 1000; ++i) {
    const Image img = oracle::random_image(rng, 6 + static_cast<int>(rng.index(20)), 6 + static_cast<int>(rng.index(20)));
    const Image copy = img;
    for (const auto& p : identity) failures += !(apply(p, img, cfg) == img);
    const Image hsv = apply(HsvParams{}, img, cfg);
    for (std::size_t k = 0; k < img.pixels.size(); ++k) failures += std::abs(hsv.pixels[k] - img.pixels[k]) > 1;
    for (PerturbationKind kind : kAllKinds) {
      const Image out = apply(sample_params(kind, cfg, rng), img, cfg);
      failures += !out.same_shape(img);  // uint8 storage keeps values in [0, 255]
    }
    failures += !(img == copy);
  }
  return {failures == 0, std::to_string(failures) + " violations over 1000 images"};
}

// ---- 9: directional experiment -------------------------------------------------

struct SeedResult {
  double completion = 0.0;
  double sm_steering = 0.0;
  bool ok = false;
};

SeedResult train_and_evaluate(const std::string& preset_name, std::uint64_t seed) {
  auto cfg = harness::preset(preset_name);
  cfg.seed = seed;
  cfg.run.step_budget = g_slow_steps;
  cfg.evaluate.speed_preset = "c1";
  cfg.out_dir = (g_work / "directional" / preset_name / ("seed_" + std::to_string(seed))).string();
  fs::remove_all(cfg.out_dir);
  SeedResult out;
  try {
    const std::string ckpt = harness::train_run(cfg);
    const auto policy = replay::load_policy(ckpt, cfg.env.camera.height, cfg.env.camera.width, cfg.arch);
    const auto res = harness::evaluate_policy(policy, cfg);
    harness::write_evaluation(res, (fs::path(cfg.out_dir) / "eval_c1").string());
    out.completion = res.stats.completion_rate;
    out.sm_steering = res.has_pooled ? res.pooled.sm_steering : std::nan("");
    out.ok = res.has_pooled;
  } catch (const std::exception& e) {
    std::cerr << preset_name << " seed " << seed << ": " << e.what() << "\n";
  }
  std::cerr << preset_name << " seed " << seed << ": completion " << out.completion << "%, S_m " << out.sm_steering
            << "\n";
  return out;
}

Outcome directional() {
  double sum_only = 0.0, sum_caps = 0.0;
  int pairs = 0;
  for (int s = 1; s <= g_slow_seeds; ++s) {
    const auto only = train_and_evaluate("sac_only", static_cast<std::uint64_t>(s));
    const auto caps = train_and_evaluate("sac_caps", static_cast<std::uint64_t>(s));
    if (only.ok && caps.ok && only.completion >= 80.0 && caps.completion >= 80.0) {
      sum_only += only.sm_steering;
      sum_caps += caps.sm_steering;
      ++pairs;
    }
  }
  if (pairs == 0) return {false, "no seed pair reached 80% completion at c1"};
  const double reduction = 1.0 - sum_caps / sum_only;
  return {reduction >= 0.30, std::to_string(pairs) + " qualifying pairs, steering S_m " + fmt(sum_only / pairs) +
                                 " -> " + fmt(sum_caps / pairs) + " (" + fmt(100 * reduction) + "% lower)"};
}

// ---- 10: experiment matrix -----------------------------------------------------

std::set<std::string> differing_keys(const harness::ExperimentConfig& a, const harness::ExperimentConfig& b) {
  std::set<std::string> out;
  for (const auto& op : nlohmann::json::diff(harness::to_json(a), harness::to_json(b))) {
    std::string p = op["path"];
    const auto first = p.find('/', 1);
    if (first != std::string::npos) p = p.substr(0, p.find('/', first + 1));
    if (p != "/preset" && p != "/out_dir") out.insert(p);
  }
  return out;
}

Outcome experiment_matrix() {
  using S = std::set<std::string>;
  const auto axis = harness::preset("lambda_sweep").sweep.lambda_t_values;
  const bool axis_ok = axis == std::vector<double>{0.5, 0.8, 1.0, 1.3};
  const auto ablation = harness::ablation_configs(harness::preset("spatial_ablation"));
  const S caps{"/caps/lambda_s", "/caps/lambda_t"};
  const auto models = harness::comparison_model_presets();
  const auto base = harness::preset("sac_only");
  bool presets_ok = models.size() == 6 && differing_keys(base, harness::preset("sac_caps")) == caps &&
                    differing_keys(base, harness::preset("sac_dr")) == S{"/augment/sim2real_enabled"} &&
                    differing_keys(harness::preset("sac_dr"), harness::preset("sac_dr_caps")) == caps &&
                    differing_keys(harness::preset("sac_translate"), harness::preset("sac_translate_caps")) == caps;
  for (const auto& m : models) {
    const auto d = differing_keys(base, harness::preset(m));
    for (const auto& k : d)
      presets_ok = presets_ok && (caps.count(k) || k == "/augment/sim2real_enabled" || k == "/run/translator");
  }
  return {axis_ok && ablation.size() == 7 && presets_ok,
          "sweep axis " + std::string(axis_ok ? "ok" : "wrong") + ", " + std::to_string(ablation.size()) +
              " ablation configs, presets " + (presets_ok ? "ok" : "differ off-axis")};
}

// ---- 11: aggregation -----------------------------------------------------------

Outcome aggregation() {
  std::vector<metrics::RunOutcome> runs(15);
  for (int i = 0; i < 11; ++i) runs[static_cast<std::size_t>(i)] = {true, 18.0};
  const auto some = metrics::aggregate_runs(runs);
  const auto none = metrics::aggregate_runs(std::vector<metrics::RunOutcome>(15));
  const bool ok = std::fabs(some.completion_rate - 73.33) <= 0.01 && std::isnan(none.avg_lap_time_s) &&
                  none.completion_rate == 0.0;
  return {ok, "11/15 -> " + fmt(some.completion_rate) + "%, 0/15 lap time " + fmt(none.avg_lap_time_s)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = (fs::temp_directory_path() / "caps_acceptance").string();
  std::vector<int> only;
  bool slow = false;
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria");
  app.add_flag("--slow", slow, "Include the long directional experiment");
  app.add_option("--steps", g_slow_steps, "Step budget for the directional experiment");
  app.add_option("--seeds", g_slow_seeds, "Seeds for the directional experiment");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::create_directories(g_work);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradients},   {2, spectrum},     {3, linearity},   {4, distance_arithmetic}, {5, replay_stress},
      {6, n_step},      {7, determinism},  {8, augmentation}, {9, directional},        {10, experiment_matrix},
      {11, aggregation}};
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    if (id == 9 && !slow) {
      std::cout << "SKIP criterion 9: directional experiment needs --slow\n";
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail << " [" << fmt(secs) << " s]"
              << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
