#include "caps/harness/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "caps/harness/presets.hpp"
#include "caps/harness/reports.hpp"
#include "caps/util/errors.hpp"

namespace caps::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string compact(double v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

struct CommonOptions {
  std::string config_path;
  std::string preset_name;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Experiment config JSON");
  cmd->add_option("--preset", o.preset_name, "Named preset used as the base config");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&o](const std::uint64_t& s) { o.seed = s; o.seed_set = true; }, "Run seed");
  cmd->add_option("--out", o.out_dir, "Output directory");
  cmd->add_option("--set", o.overrides, "Override a config key: dotted.key=value (repeatable)");
}

void merge_into(json& base, const json& patch) {
  for (const auto& [k, v] : patch.items()) {
    if (v.is_object() && base.contains(k) && base[k].is_object()) merge_into(base[k], v);
    else base[k] = v;
  }
}

// defaults or preset -> config file -> --set overrides -> --seed / --out
ExperimentConfig resolve(const CommonOptions& o, const std::string& fallback_config = "") {
  json doc = to_json(o.preset_name.empty() ? ExperimentConfig{} : preset(o.preset_name));
  const std::string path = !o.config_path.empty() ? o.config_path : fallback_config;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    if (!file.is_object()) throw ConfigError(path + ": config must be a JSON object");
    merge_into(doc, file);
  }
  for (const auto& s : o.overrides) apply_override(doc, s);
  ExperimentConfig cfg = from_json(doc);
  if (o.seed_set) cfg.seed = o.seed;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  cfg.validate();
  return cfg;
}

struct CellOutcome {
  std::string label;
  bool ok = false;
  std::string error;
  EvalResult eval;
};

CellOutcome run_cell(const Cell& cell) {
  CellOutcome out;
  out.label = cell.label;
  try {
    const std::string ckpt = train_run(cell.config);
    const auto policy = replay::load_policy(ckpt, cell.config.env.camera.height, cell.config.env.camera.width,
                                            cell.config.arch);
    out.eval = evaluate_policy(policy, cell.config);
    write_evaluation(out.eval, (fs::path(cell.config.out_dir) / ("eval_" + cell.config.evaluate.speed_preset)).string());
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
    std::cerr << "cell " << cell.label << " failed: " << e.what() << "\n";
  }
  return out;
}

json cell_json(const CellOutcome& c) {
  json j{{"label", c.label}, {"ok", c.ok}};
  if (!c.ok) {
    j["error"] = c.error;
    return j;
  }
  j["run_stats"] = to_json(c.eval.stats);
  j["smoothness"] = c.eval.has_pooled ? to_json(c.eval.pooled) : json(nullptr);
  return j;
}

struct Aggregate {
  double sm_steering = std::nan("");
  double sm_speed = std::nan("");
  double lap_time = std::nan("");
  double completion = std::nan("");
  int ok_cells = 0;
  int cells = 0;
};

// Means over successful cells; lap time over cells with completions.
Aggregate aggregate(const std::vector<const CellOutcome*>& cells) {
  Aggregate a;
  double sm = 0, sp = 0, lap = 0, comp = 0;
  int n_sm = 0, n_lap = 0;
  for (const auto* c : cells) {
    ++a.cells;
    if (!c->ok) continue;
    ++a.ok_cells;
    comp += c->eval.stats.completion_rate;
    if (c->eval.has_pooled) {
      sm += c->eval.pooled.sm_steering;
      sp += c->eval.pooled.sm_speed;
      ++n_sm;
    }
    if (std::isfinite(c->eval.stats.avg_lap_time_s)) {
      lap += c->eval.stats.avg_lap_time_s;
      ++n_lap;
    }
  }
  if (a.ok_cells > 0) a.completion = comp / a.ok_cells;
  if (n_sm > 0) {
    a.sm_steering = sm / n_sm;
    a.sm_speed = sp / n_sm;
  }
  if (n_lap > 0) a.lap_time = lap / n_lap;
  return a;
}

std::vector<std::string> aggregate_cells(const std::string& label, const Aggregate& a) {
  return {label,
          format_number(a.sm_steering, 4),
          format_number(a.sm_speed, 4),
          format_number(a.lap_time, 2),
          format_number(a.completion, 2) + "%",
          std::to_string(a.ok_cells) + "/" + std::to_string(a.cells)};
}

json aggregate_json(const std::string& label, const Aggregate& a) {
  return {{"label", label},
          {"sm_steering", number_or_null(a.sm_steering)},
          {"sm_speed", number_or_null(a.sm_speed)},
          {"avg_lap_time_s", number_or_null(a.lap_time)},
          {"completion_rate_percent", number_or_null(a.completion)},
          {"ok_cells", a.ok_cells},
          {"cells", a.cells}};
}

std::vector<std::uint64_t> seeds_or(const std::vector<std::uint64_t>& given, const ExperimentConfig& cfg) {
  return given.empty() ? cfg.sweep.seeds : given;
}

int cmd_train(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const std::string ckpt = train_run(cfg);
  std::cout << "run directory: " << cfg.out_dir << "\nfinal checkpoint: " << ckpt << "\n";
  return kExitOk;
}

int cmd_evaluate(const CommonOptions& o, const std::string& checkpoint, int runs, const std::string& speed) {
  if (checkpoint.empty()) throw UsageError("evaluate needs --checkpoint PATH");
  if (!fs::exists(checkpoint)) throw UsageError("checkpoint not found: " + checkpoint);
  std::string fallback;
  const fs::path run_dir = fs::path(checkpoint).parent_path().parent_path();
  if (o.config_path.empty() && o.preset_name.empty() && fs::exists(run_dir / "config.json"))
    fallback = (run_dir / "config.json").string();
  CommonOptions copy = o;
  copy.out_dir.clear();
  if (runs >= 0) copy.overrides.push_back("evaluate.runs=" + std::to_string(runs));
  if (!speed.empty()) copy.overrides.push_back("evaluate.speed_preset=\"" + speed + "\"");
  if (runs == 0) throw UsageError("--runs must be >= 1");
  ExperimentConfig cfg = resolve(copy, fallback);
  const std::string out =
      !o.out_dir.empty() ? o.out_dir : (run_dir / ("eval_" + cfg.evaluate.speed_preset)).string();
  const auto policy = replay::load_policy(checkpoint, cfg.env.camera.height, cfg.env.camera.width, cfg.arch);
  const EvalResult result = evaluate_policy(policy, cfg);
  write_evaluation(result, out);
  std::cout << "completion " << format_number(result.stats.completion_rate, 2) << "% ("
            << result.stats.completions << "/" << result.stats.runs << "), avg lap time "
            << format_number(result.stats.avg_lap_time_s, 2) << " s, sm_steering "
            << (result.has_pooled ? format_number(result.pooled.sm_steering, 4) : "NaN") << "\nreport: " << out
            << "/summary.md\n";
  return kExitOk;
}

int cmd_sweep(CommonOptions o, const std::vector<double>& values, const std::vector<std::uint64_t>& seeds) {
  if (o.preset_name.empty() && o.config_path.empty()) o.preset_name = "lambda_sweep";
  const ExperimentConfig base = resolve(o);
  const std::vector<double> axis = values.empty() ? base.sweep.lambda_t_values : values;
  const auto seed_list = seeds_or(seeds, base);
  const auto cells = sweep_cells(base, axis, seed_list);
  std::vector<CellOutcome> outcomes;
  for (const auto& c : cells) outcomes.push_back(run_cell(c));

  MarkdownTable table{{"lambda_t", "sm_steering", "sm_speed", "avg_lap_time_s", "completion", "cells_ok"}, {}};
  json report{{"lambda_s", 0.0}, {"values", axis}, {"seeds", seed_list}, {"cells", json::array()}, {"rows", json::array()}};
  for (const auto& c : outcomes) report["cells"].push_back(cell_json(c));
  for (std::size_t v = 0; v < axis.size(); ++v) {
    std::vector<const CellOutcome*> group;
    for (std::size_t s = 0; s < seed_list.size(); ++s) group.push_back(&outcomes[v * seed_list.size() + s]);
    const Aggregate a = aggregate(group);
    table.rows.push_back(aggregate_cells(compact(axis[v]), a));
    report["rows"].push_back(aggregate_json(compact(axis[v]), a));
  }
  fs::create_directories(base.out_dir);
  write_text((fs::path(base.out_dir) / "sweep.json").string(), report.dump(2) + "\n");
  write_text((fs::path(base.out_dir) / "sweep.md").string(),
             "# Temporal smoothness sensitivity (lambda_s = 0)\n\n" + table.render());
  std::cout << table.render();
  const bool all_failed = std::none_of(outcomes.begin(), outcomes.end(), [](const auto& c) { return c.ok; });
  return all_failed ? kExitRuntime : kExitOk;
}

int cmd_ablate(CommonOptions o, const std::vector<std::uint64_t>& seeds) {
  if (o.preset_name.empty() && o.config_path.empty()) o.preset_name = "spatial_ablation";
  const ExperimentConfig base = resolve(o);
  const auto seed_list = seeds_or(seeds, base);
  const auto configs = ablation_configs(base);
  std::vector<std::vector<CellOutcome>> outcomes(configs.size());
  for (std::size_t k = 0; k < configs.size(); ++k)
    for (auto seed : seed_list) {
      Cell c = configs[k];
      c.config.seed = seed;
      c.config.out_dir = (fs::path(base.out_dir) / c.label / ("seed_" + std::to_string(seed))).string();
      c.label += "/seed=" + std::to_string(seed);
      outcomes[k].push_back(run_cell(c));
    }
  MarkdownTable table{{"configuration", "sm_steering", "sm_speed", "avg_lap_time_s", "completion", "cells_ok"}, {}};
  json report{{"seeds", seed_list}, {"rows", json::array()}, {"cells", json::array()}};
  bool any_ok = false;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    std::vector<const CellOutcome*> group;
    for (const auto& c : outcomes[k]) {
      group.push_back(&c);
      report["cells"].push_back(cell_json(c));
      any_ok = any_ok || c.ok;
    }
    const Aggregate a = aggregate(group);
    table.rows.push_back(aggregate_cells(configs[k].label, a));
    report["rows"].push_back(aggregate_json(configs[k].label, a));
  }
  fs::create_directories(base.out_dir);
  write_text((fs::path(base.out_dir) / "ablation.json").string(), report.dump(2) + "\n");
  write_text((fs::path(base.out_dir) / "ablation.md").string(), "# Leave-one-out over Phi\n\n" + table.render());
  std::cout << table.render();
  return any_ok ? kExitOk : kExitRuntime;
}

int cmd_analyze(const CommonOptions& o, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw UsageError("analyze needs at least one trace CSV, episode JSONL or evaluation directory");
  ExperimentConfig cfg = resolve(o);
  const std::string out = o.out_dir.empty() ? "analysis" : o.out_dir;
  std::vector<std::string> traces, logs;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      if (fs::exists(p / "traces"))
        for (const auto& e : fs::directory_iterator(p / "traces"))
          if (e.path().extension() == ".csv") found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      traces.insert(traces.end(), found.begin(), found.end());
      if (fs::exists(p / "episodes.jsonl")) logs.push_back((p / "episodes.jsonl").string());
    } else if (p.extension() == ".csv") {
      traces.push_back(in);
    } else if (p.extension() == ".jsonl") {
      logs.push_back(in);
    } else if (!fs::exists(p)) {
      throw UsageError("input not found: " + in);
    } else {
      throw UsageError("unrecognized input (expected .csv, .jsonl or a directory): " + in);
    }
  }

  const double fs_hz = 1.0 / cfg.env.dt;
  const env::SpeedConfig speed = evaluation_speed(cfg);
  const metrics::UnitScale units = unit_scale(cfg, speed);
  json report{{"traces", json::array()}, {"bins", "one-sided, n_b = floor(n/2)"}};
  std::vector<metrics::SmoothnessReport> per_trace;
  MarkdownTable trace_table{{"trace", "n_samples", "sm_steering", "sm_speed", "mean_abs_steering_change_deg"}, {}};
  fs::create_directories(fs::path(out) / "plots");
  for (const auto& t : traces) {
    const metrics::ActionTrace trace = read_trace_csv(t, fs_hz);
    json entry{{"path", t}, {"n_samples", trace.samples.size()}};
    if (trace.samples.size() >= 2) {
      const auto r = metrics::smoothness(trace, cfg.env.vehicle.steering_limit, units, cfg.metrics.remove_mean);
      per_trace.push_back(r);
      entry["smoothness"] = to_json(r);
      trace_table.rows.push_back({fs::path(t).filename().string(), std::to_string(r.n_samples),
                                  format_number(r.sm_steering, 4), format_number(r.sm_speed, 4),
                                  format_number(r.mean_abs_steering_change, 3)});
      Series steer{"steering", {}, {}}, spd{"speed", {}, {}};
      for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        steer.x.push_back(static_cast<double>(i) / fs_hz);
        steer.y.push_back(trace.samples[i][0]);
        spd.x.push_back(static_cast<double>(i) / fs_hz);
        spd.y.push_back(trace.samples[i][1]);
      }
      write_text((fs::path(out) / "plots" / (fs::path(t).stem().string() + "_actions.svg")).string(),
                 svg_line_plot(fs::path(t).stem().string(), "time (s)", {steer, spd}));
    } else {
      entry["smoothness"] = nullptr;
      trace_table.rows.push_back({fs::path(t).filename().string(), std::to_string(trace.samples.size()), "NaN", "NaN", "NaN"});
    }
    report["traces"].push_back(entry);
  }
  report["pooled"] = per_trace.empty() ? json(nullptr) : to_json(metrics::pool(per_trace));

  std::vector<metrics::RunOutcome> outcomes;
  for (const auto& l : logs)
    for (const auto& r : read_episode_log(l))
      outcomes.push_back({r.done_reason == env::DoneReason::lap_complete, r.lap_time_s});
  report["run_stats"] = outcomes.empty() ? json(nullptr) : to_json(metrics::aggregate_runs(outcomes));

  std::string md = "# Analysis\n\n";
  if (!per_trace.empty()) {
    const auto p = metrics::pool(per_trace);
    MarkdownTable pooled{{"sm_steering", "sm_speed", "mean_abs_steering_change_deg", "n_samples"},
                         {{format_number(p.sm_steering, 4), format_number(p.sm_speed, 4),
                           format_number(p.mean_abs_steering_change, 3), std::to_string(p.n_samples)}}};
    md += "## Pooled smoothness\n\n" + pooled.render() + "\n";
  }
  if (!outcomes.empty()) {
    const auto s = metrics::aggregate_runs(outcomes);
    MarkdownTable runs{{"runs", "completion", "avg_lap_time_s"},
                       {{std::to_string(s.runs), format_number(s.completion_rate, 2) + "%", format_number(s.avg_lap_time_s, 2)}}};
    md += "## Runs\n\n" + runs.render() + "\n";
  }
  if (!traces.empty()) md += "## Traces\n\n" + trace_table.render();
  write_text((fs::path(out) / "analysis.json").string(), report.dump(2) + "\n");
  write_text((fs::path(out) / "analysis.md").string(), md);
  std::cout << md;
  return kExitOk;
}

int cmd_render_sheet(const CommonOptions& o, int columns, int scale) {
  ExperimentConfig cfg = resolve(o);
  const std::string out = o.out_dir.empty() ? "augment_sheet" : o.out_dir;
  if (columns < 1 || scale < 1) throw UsageError("--columns and --scale must be >= 1");
  env::EnvConfig env_cfg = cfg.env;
  env_cfg.jitter.enabled = false;
  env::RacingEnv env(load_track_ref(cfg.track), env_cfg);
  Rng rng(cfg.seed);
  const Image source = env.reset(rng);
  std::vector<augment::PerturbationKind> kinds(augment::kAllKinds.begin(), augment::kAllKinds.end());
  const Image sheet = augment::contact_sheet(source, cfg.augment, kinds, columns, scale, rng);
  fs::create_directories(out);
  augment::write_png(sheet, (fs::path(out) / "augment_sheet.png").string());
  Image big(source.height * scale, source.width * scale);
  for (int y = 0; y < big.height; ++y)
    for (int x = 0; x < big.width; ++x)
      for (int c = 0; c < 3; ++c) big.at(y, x, c) = source.at(y / scale, x / scale, c);
  augment::write_png(big, (fs::path(out) / "source.png").string());
  std::string rows;
  for (auto k : kinds) rows += "- " + std::string(augment::to_string(k)) + "\n";
  write_text((fs::path(out) / "augment_sheet.md").string(),
             "# Perturbation contact sheet\n\nFirst column: source frame. Rows, top to bottom:\n\n" + rows);
  std::cout << "wrote " << (fs::path(out) / "augment_sheet.png").string() << "\n";
  return kExitOk;
}

}  // namespace

std::vector<Cell> sweep_cells(const ExperimentConfig& base, const std::vector<double>& values,
                              const std::vector<std::uint64_t>& seeds) {
  if (values.empty()) throw UsageError("sweep needs at least one lambda_t value");
  if (seeds.empty()) throw UsageError("sweep needs at least one seed");
  std::vector<Cell> cells;
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("lambda_t values must be finite and >= 0");
    for (auto seed : seeds) {
      Cell c{"lambda_t=" + compact(v) + "/seed=" + std::to_string(seed), base};
      c.config.lambda_t = v;
      c.config.lambda_s = 0.0;
      c.config.seed = seed;
      c.config.out_dir =
          (fs::path(base.out_dir) / ("lambda_t_" + compact(v)) / ("seed_" + std::to_string(seed))).string();
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

std::vector<Cell> ablation_configs(const ExperimentConfig& base) {
  auto& enabled = base.augment.phi_enabled;
  for (auto k : augment::kPhiKinds)
    if (std::find(enabled.begin(), enabled.end(), k) == enabled.end())
      throw ConfigError("ablate-phi needs all six Phi methods enabled; missing " + std::string(augment::to_string(k)));
  std::vector<Cell> cells{{"full", base}};
  for (auto k : augment::kPhiKinds) {
    Cell c{"-" + short_kind_name(k), base};
    auto& phi = c.config.augment.phi_enabled;
    phi.erase(std::remove(phi.begin(), phi.end(), k), phi.end());
    cells.push_back(std::move(c));
  }
  return cells;
}

std::string train_run(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  write_text((fs::path(cfg.out_dir) / "config.json").string(), to_json(cfg).dump(2) + "\n");
  const replay::TrainingSummary summary = replay::run_training(make_training_setup(cfg));
  json s{{"env_steps", summary.env_steps},
         {"updates", summary.updates},
         {"episodes", summary.episodes},
         {"checkpoints", summary.checkpoints}};
  write_text((fs::path(cfg.out_dir) / "summary.json").string(), s.dump(2) + "\n");
  return summary.checkpoints.back();
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Image-based CAPS racing experiments"};
  app.require_subcommand(1);
  app.fallthrough(false);

  CommonOptions train_o, eval_o, sweep_o, ablate_o, analyze_o, sheet_o;
  auto* train = app.add_subcommand("train", "Train a policy");
  add_common(train, train_o);

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint with deterministic actions");
  add_common(evaluate, eval_o);
  std::string checkpoint, speed;
  int runs = -1;
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--runs", runs, "Number of evaluation runs (default from config, 15)");
  evaluate->add_option("--speed", speed, "Speed preset: c1, c2, c3 or train");

  auto* sweep = app.add_subcommand("sweep", "Temporal-weight sensitivity sweep with lambda_s = 0");
  add_common(sweep, sweep_o);
  std::vector<double> values;
  std::vector<std::uint64_t> sweep_seeds;
  sweep->add_option("--values", values, "lambda_t values (default 0.5 0.8 1.0 1.3)");
  sweep->add_option("--seeds", sweep_seeds, "Seeds per value");

  auto* ablate = app.add_subcommand("ablate-phi", "Leave-one-out study over the Phi perturbations");
  add_common(ablate, ablate_o);
  std::vector<std::uint64_t> ablate_seeds;
  ablate->add_option("--seeds", ablate_seeds, "Seeds per configuration");

  auto* analyze = app.add_subcommand("analyze", "Recompute smoothness and run statistics from recorded files");
  add_common(analyze, analyze_o);
  std::vector<std::string> inputs;
  analyze->add_option("inputs", inputs, "Trace CSVs, episode JSONL logs or evaluation directories");

  auto* sheet = app.add_subcommand("render-augment-sheet", "Render a PNG grid of perturbed observations");
  add_common(sheet, sheet_o);
  int columns = 6, scale = 4;
  sheet->add_option("--columns", columns, "Samples per perturbation");
  sheet->add_option("--scale", scale, "Pixel upscaling factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_o);
    if (*evaluate) return cmd_evaluate(eval_o, checkpoint, runs, speed);
    if (*sweep) return cmd_sweep(sweep_o, values, sweep_seeds);
    if (*ablate) return cmd_ablate(ablate_o, ablate_seeds);
    if (*analyze) return cmd_analyze(analyze_o, inputs);
    if (*sheet) return cmd_render_sheet(sheet_o, columns, scale);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace caps::harness
