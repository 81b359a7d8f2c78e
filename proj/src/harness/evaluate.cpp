#include "caps/harness/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "caps/augment/perturb.hpp"
#include "caps/harness/reports.hpp"
#include "caps/util/errors.hpp"

namespace caps::harness {

namespace fs = std::filesystem;
using nlohmann::json;

env::SpeedConfig evaluation_speed(const ExperimentConfig& cfg) {
  if (cfg.evaluate.speed_preset == "train") return cfg.env.speed;
  return speed_preset(cfg.evaluate.speed_preset);
}

metrics::UnitScale unit_scale(const ExperimentConfig& cfg, const env::SpeedConfig& speed) {
  if (cfg.metrics.units != "physical") return {};
  return {cfg.env.vehicle.steering_limit * 180.0 / std::numbers::pi, 0.5 * (speed.v_max - speed.v_min)};
}

EvalResult evaluate_policy(const nn::PolicyNet<float>& policy, const ExperimentConfig& cfg) {
  if (cfg.evaluate.runs < 1) throw ConfigError("evaluate.runs must be >= 1");
  EvalResult result;
  result.speed_preset = cfg.evaluate.speed_preset;
  result.speed = evaluation_speed(cfg);

  env::EnvConfig env_cfg = cfg.env;
  env_cfg.speed = result.speed;
  env_cfg.jitter.enabled = cfg.evaluate.jitter;
  env::RacingEnv env(load_track_ref(cfg.track), env_cfg);
  const auto translator = augment::make_translator(cfg.run.translator);
  auto frame = [&](const Image& raw) { return std::make_shared<const Image>(translator->translate(raw)); };

  Rng master(cfg.evaluate.seed);
  for (int i = 0; i < cfg.evaluate.runs; ++i) {
    Rng reset_rng = master.split();
    EvalRun run;
    run.index = i;
    run.trace.fs = 1.0 / env_cfg.dt;
    StackedObs obs = StackedObs::initial(frame(env.reset(reset_rng)));
    for (;;) {
      const nn::ActionSample a = nn::sample_action(policy.forward_one(obs), nullptr);
      env::StepResult res = env.step({a.action[0], a.action[1]});
      run.trace.samples.push_back({res.executed.steering, res.executed.speed});
      run.episode_return += res.reward;
      ++run.steps;
      if (res.done) {
        run.done_reason = *res.done_reason;
        run.lap_time_s = run.done_reason == env::DoneReason::lap_complete ? env.elapsed_seconds()
                                                                          : std::numeric_limits<double>::quiet_NaN();
        break;
      }
      obs = obs.push(frame(res.observation));
    }
    result.runs.push_back(std::move(run));
  }
  summarize(result, cfg);
  return result;
}

void summarize(EvalResult& result, const ExperimentConfig& cfg) {
  const metrics::UnitScale units = unit_scale(cfg, result.speed);
  std::vector<metrics::RunOutcome> outcomes;
  std::vector<metrics::SmoothnessReport> reports;
  for (auto& run : result.runs) {
    outcomes.push_back({run.done_reason == env::DoneReason::lap_complete, run.lap_time_s});
    run.has_smoothness = run.trace.samples.size() >= 2;
    if (run.has_smoothness) {
      run.smoothness = metrics::smoothness(run.trace, cfg.env.vehicle.steering_limit, units, cfg.metrics.remove_mean);
      reports.push_back(run.smoothness);
    }
  }
  result.stats = metrics::aggregate_runs(outcomes);
  result.has_pooled = !reports.empty();
  if (result.has_pooled) result.pooled = metrics::pool(reports);
}

void write_trace_csv(const metrics::ActionTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "t,steering,speed\n";
  char buf[128];
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", static_cast<double>(i) / trace.fs, trace.samples[i][0],
                  trace.samples[i][1]);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

namespace {

double parse_double(const std::string& field, const std::string& path, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (used != field.size() || field.empty())
    throw ParseError(path + ":" + std::to_string(line) + ": '" + field + "' is not a number");
  return v;
}

}  // namespace

metrics::ActionTrace read_trace_csv(const std::string& path, double fs) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  metrics::ActionTrace trace;
  trace.fs = fs;
  std::string line;
  int number = 0;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
  ++number;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,steering,speed") throw ParseError(path + ":1: expected header 't,steering,speed'");
  bool ended_with_newline = true;
  while (std::getline(in, line)) {
    ++number;
    ended_with_newline = !in.eof();
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 3)
      throw ParseError(path + ":" + std::to_string(number) + ": expected 3 fields, found " + std::to_string(fields.size()));
    parse_double(fields[0], path, number);
    trace.samples.push_back({parse_double(fields[1], path, number), parse_double(fields[2], path, number)});
  }
  if (!ended_with_newline) throw ParseError(path + ":" + std::to_string(number) + ": truncated final line");
  return trace;
}

std::vector<replay::EpisodeRecord> read_episode_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<replay::EpisodeRecord> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(number) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + "malformed JSON");
    }
    try {
      replay::EpisodeRecord r;
      r.actor_id = j.at("actor_id").get<int>();
      r.episode_index = j.at("episode_index").get<std::int64_t>();
      r.steps = j.at("steps").get<int>();
      r.episode_return = j.at("return").get<double>();
      const std::string reason = j.at("done_reason").get<std::string>();
      if (reason == "collision") r.done_reason = env::DoneReason::collision;
      else if (reason == "lap_complete") r.done_reason = env::DoneReason::lap_complete;
      else if (reason == "timeout") r.done_reason = env::DoneReason::timeout;
      else throw ParseError(where + "unknown done_reason '" + reason + "'");
      const auto& lap = j.at("lap_time_s");
      r.lap_time_s = lap.is_null() ? std::numeric_limits<double>::quiet_NaN() : lap.get<double>();
      out.push_back(r);
    } catch (const json::exception& e) {
      throw ParseError(where + e.what());
    }
  }
  return out;
}

void write_evaluation(const EvalResult& result, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "traces");
  fs::create_directories(root / "plots");

  std::string episodes;
  json per_run = json::array();
  MarkdownTable runs_table{{"run", "done_reason", "steps", "lap_time_s", "sm_steering", "sm_speed", "mean_abs_steering_change_deg"}, {}};
  for (const auto& run : result.runs) {
    char name[64];
    std::snprintf(name, sizeof name, "run_%02d", run.index);
    write_trace_csv(run.trace, (root / "traces" / (std::string(name) + ".csv")).string());

    replay::EpisodeRecord rec;
    rec.actor_id = 0;
    rec.episode_index = run.index;
    rec.steps = run.steps;
    rec.episode_return = run.episode_return;
    rec.done_reason = run.done_reason;
    rec.lap_time_s = run.lap_time_s;
    episodes += replay::episode_json(rec) + "\n";

    json r{{"run", run.index}, {"trace", std::string("traces/") + name + ".csv"},
           {"done_reason", std::string(env::to_string(run.done_reason))}, {"steps", run.steps},
           {"lap_time_s", number_or_null(run.lap_time_s)}};
    if (run.has_smoothness) r["smoothness"] = to_json(run.smoothness);
    else r["smoothness"] = nullptr;
    per_run.push_back(r);
    runs_table.rows.push_back({std::to_string(run.index), std::string(env::to_string(run.done_reason)),
                               std::to_string(run.steps), format_number(run.lap_time_s, 2),
                               run.has_smoothness ? format_number(run.smoothness.sm_steering, 4) : "NaN",
                               run.has_smoothness ? format_number(run.smoothness.sm_speed, 4) : "NaN",
                               run.has_smoothness ? format_number(run.smoothness.mean_abs_steering_change, 3) : "NaN"});

    if (run.trace.samples.size() >= 2) {
      Series steer{"steering", {}, {}}, speed{"speed", {}, {}};
      for (std::size_t i = 0; i < run.trace.samples.size(); ++i) {
        const double t = static_cast<double>(i) / run.trace.fs;
        steer.x.push_back(t);
        steer.y.push_back(run.trace.samples[i][0]);
        speed.x.push_back(t);
        speed.y.push_back(run.trace.samples[i][1]);
      }
      write_text((root / "plots" / (std::string(name) + "_actions.svg")).string(),
                 svg_line_plot(std::string(name) + " actions", "time (s)", {steer, speed}));
      std::vector<double> steering_series;
      for (const auto& s : run.trace.samples) steering_series.push_back(s[0]);
      write_text((root / "plots" / (std::string(name) + "_steering_spectrum.svg")).string(),
                 svg_stem_plot(std::string(name) + " steering spectrum",
                               metrics::amplitude_spectrum(steering_series, run.trace.fs)));
    }
  }
  write_text((root / "episodes.jsonl").string(), episodes);

  json stats = to_json(result.stats);
  stats["speed_preset"] = result.speed_preset;
  stats["v_min"] = result.speed.v_min;
  stats["v_max"] = result.speed.v_max;
  write_text((root / "run_stats.json").string(), stats.dump(2) + "\n");

  json smooth{{"pooled", result.has_pooled ? to_json(result.pooled) : json(nullptr)},
              {"bins", "one-sided, n_b = floor(n/2)"},
              {"runs", per_run}};
  write_text((root / "smoothness.json").string(), smooth.dump(2) + "\n");

  MarkdownTable summary{{"speed", "runs", "completion", "avg_lap_time_s", "sm_steering", "sm_speed",
                         "mean_abs_steering_change_deg", "n_samples"},
                        {}};
  summary.rows.push_back({result.speed_preset, std::to_string(result.stats.runs),
                          format_number(result.stats.completion_rate, 2) + "%",
                          format_number(result.stats.avg_lap_time_s, 2),
                          result.has_pooled ? format_number(result.pooled.sm_steering, 4) : "NaN",
                          result.has_pooled ? format_number(result.pooled.sm_speed, 4) : "NaN",
                          result.has_pooled ? format_number(result.pooled.mean_abs_steering_change, 3) : "NaN",
                          std::to_string(result.has_pooled ? result.pooled.n_samples : 0)});
  write_text((root / "summary.md").string(),
             "# Evaluation\n\n" + summary.render() + "\n## Runs\n\n" + runs_table.render());
}

}  // namespace caps::harness
