#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "caps/harness/commands.hpp"
#include "caps/harness/presets.hpp"
#include "caps/harness/reports.hpp"
#include "caps/util/errors.hpp"
#include "support/oracles.hpp"

using namespace caps;
using namespace caps::harness;
using nlohmann::json;

namespace {

// Two-level paths ("/caps/lambda_t") where two presets differ, ignoring naming fields.
std::set<std::string> differing_keys(const ExperimentConfig& a, const ExperimentConfig& b) {
  std::set<std::string> out;
  for (const auto& op : json::diff(to_json(a), to_json(b))) {
    std::string p = op["path"];
    const auto first = p.find('/', 1);
    if (first != std::string::npos) p = p.substr(0, p.find('/', first + 1));
    if (p != "/preset" && p != "/out_dir") out.insert(p);
  }
  return out;
}

std::string config_error(const json& doc) {
  try {
    from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, PublishedSchemaMatchesGenerator) {
  std::ifstream in(std::string(CAPS_SOURCE_DIR) + "/configs/experiment.schema.json");
  ASSERT_TRUE(in);
  EXPECT_EQ(json::parse(in), experiment_schema());
}

TEST(Config, JsonRoundTrip) {
  for (const auto& name : preset_names()) {
    const auto c = preset(name);
    EXPECT_EQ(to_json(from_json(to_json(c))), to_json(c)) << name;
  }
}

TEST(Config, PartialDocumentsKeepDefaults) {
  const auto c = from_json(json::parse(R"({"sac": {"batch_size": 64}})"));
  EXPECT_EQ(c.sac.batch_size, 64);
  EXPECT_EQ(c.sac.n_step, ExperimentConfig{}.sac.n_step);
}

TEST(Config, UnknownKeyNamesDottedPath) {
  const std::string msg = config_error(json::parse(R"({"sac": {"gama": 0.9}})"));
  EXPECT_NE(msg.find("sac.gama"), std::string::npos) << msg;
  EXPECT_NE(config_error(json::parse(R"({"sac": {"gamma": "high"}})")).find("sac.gamma"), std::string::npos);
  EXPECT_FALSE(config_error(json::parse(R"({"caps": {"lambda_t": -0.5}})")).empty());
}

TEST(Config, OverridesParseJsonOrString) {
  json doc = to_json(ExperimentConfig{});
  apply_override(doc, "sac.gamma=0.95");
  apply_override(doc, "run.translator=invert");
  apply_override(doc, "sweep.lambda_t_values=[0.1,0.2]");
  const auto c = from_json(doc);
  EXPECT_EQ(c.sac.gamma, 0.95);
  EXPECT_EQ(c.run.translator, "invert");
  EXPECT_EQ(c.sweep.lambda_t_values, (std::vector<double>{0.1, 0.2}));
  EXPECT_THROW(apply_override(doc, "no_equals_sign"), ConfigError);
  json bad = doc;
  apply_override(bad, "sac.bogus=1");
  EXPECT_THROW(from_json(bad), ConfigError);
}

TEST(Presets, DifferOnlyOnTheirAxes) {
  const auto base = preset("sac_only");
  using S = std::set<std::string>;
  EXPECT_EQ(differing_keys(base, preset("sac_caps")), (S{"/caps/lambda_s", "/caps/lambda_t"}));
  EXPECT_EQ(differing_keys(base, preset("sac_temporal")), (S{"/caps/lambda_t"}));
  EXPECT_EQ(differing_keys(base, preset("sac_spatial")), (S{"/caps/lambda_s"}));
  EXPECT_EQ(differing_keys(base, preset("sac_steering_penalty")), (S{"/run/steering_penalty"}));
  EXPECT_EQ(differing_keys(base, preset("sac_dr")), (S{"/augment/sim2real_enabled"}));
  EXPECT_EQ(differing_keys(preset("sac_dr"), preset("sac_dr_caps")), (S{"/caps/lambda_s", "/caps/lambda_t"}));
  EXPECT_EQ(differing_keys(preset("sac_translate"), preset("sac_translate_caps")),
            (S{"/caps/lambda_s", "/caps/lambda_t"}));
  EXPECT_EQ(comparison_model_presets().size(), 6u);
  EXPECT_THROW(preset("nope"), ConfigError);
}

TEST(Presets, SweepAxisAndCells) {
  const auto c = preset("lambda_sweep");
  EXPECT_EQ(c.sweep.lambda_t_values, (std::vector<double>{0.5, 0.8, 1.0, 1.3}));
  const auto cells = sweep_cells(c, c.sweep.lambda_t_values, {1, 2});
  ASSERT_EQ(cells.size(), 8u);
  std::set<std::string> labels;
  for (const auto& cell : cells) {
    EXPECT_EQ(cell.config.lambda_s, 0.0);
    labels.insert(cell.label);
  }
  EXPECT_EQ(labels.size(), 8u);
  EXPECT_EQ(cells[0].config.lambda_t, 0.5);
}

TEST(Presets, AblationLeavesOneOut) {
  const auto cells = ablation_configs(preset("spatial_ablation"));
  ASSERT_EQ(cells.size(), 7u);
  EXPECT_EQ(cells[0].config.augment.phi_enabled.size(), 6u);
  std::set<std::string> labels{cells[0].label};
  for (std::size_t i = 1; i < cells.size(); ++i) {
    EXPECT_EQ(cells[i].config.augment.phi_enabled.size(), 5u);
    labels.insert(cells[i].label);
  }
  EXPECT_EQ(labels.size(), 7u);
  EXPECT_TRUE(labels.count("-blur"));
  auto partial = preset("spatial_ablation");
  partial.augment.phi_enabled.pop_back();
  EXPECT_THROW(ablation_configs(partial), ConfigError);
}

TEST(Presets, SpeedRanges) {
  EXPECT_EQ(speed_preset_names(), (std::vector<std::string>{"c1", "c2", "c3"}));
  double last_max = 0.0;
  for (const auto& n : speed_preset_names()) {
    const auto s = speed_preset(n);
    EXPECT_LT(s.v_min, s.v_max);
    EXPECT_GT(s.v_max, last_max);
    last_max = s.v_max;
  }
  EXPECT_THROW(speed_preset("c4"), ConfigError);
}

TEST(Traces, CsvRoundTrip) {
  const auto dir = oracle::fresh_dir("trace_csv");
  metrics::ActionTrace tr;
  Rng rng(1);
  for (int i = 0; i < 40; ++i) tr.samples.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
  write_trace_csv(tr, (dir / "t.csv").string());
  const auto back = read_trace_csv((dir / "t.csv").string(), 30.0);
  ASSERT_EQ(back.samples.size(), tr.samples.size());
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    EXPECT_DOUBLE_EQ(back.samples[i][0], tr.samples[i][0]);
    EXPECT_DOUBLE_EQ(back.samples[i][1], tr.samples[i][1]);
  }
}

TEST(Traces, MalformedCsvNamesTheLine) {
  const auto dir = oracle::fresh_dir("trace_bad");
  write_text((dir / "t.csv").string(), "t,steering,speed\n0,0.1,0.2\n0.033,abc,0.2\n");
  try {
    read_trace_csv((dir / "t.csv").string(), 30.0);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find('3'), std::string::npos) << e.what();
  }
  write_text((dir / "e.jsonl").string(), "{\"actor_id\": 0}\n{broken\n");
  EXPECT_THROW(read_episode_log((dir / "e.jsonl").string()), ParseError);
}

TEST(Traces, EpisodeLogRoundTrip) {
  const auto dir = oracle::fresh_dir("episode_log");
  replay::EpisodeRecord a, b;
  a.actor_id = 1;
  a.steps = 300;
  a.done_reason = env::DoneReason::lap_complete;
  a.lap_time_s = 10.0;
  b.done_reason = env::DoneReason::collision;
  b.lap_time_s = std::numeric_limits<double>::quiet_NaN();
  write_text((dir / "e.jsonl").string(), replay::episode_json(a) + "\n" + replay::episode_json(b) + "\n");
  const auto recs = read_episode_log((dir / "e.jsonl").string());
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].actor_id, 1);
  EXPECT_EQ(recs[0].done_reason, env::DoneReason::lap_complete);
  EXPECT_EQ(recs[0].lap_time_s, 10.0);
  EXPECT_TRUE(std::isnan(recs[1].lap_time_s));
}

TEST(Reports, NumberFormatting) {
  EXPECT_EQ(format_number(std::nan(""), 3), "NaN");
  EXPECT_EQ(format_number(1.23456, 2), "1.23");
  EXPECT_TRUE(number_or_null(std::nan("")).is_null());
  EXPECT_EQ(number_or_null(2.5), 2.5);
  MarkdownTable t{{"a", "b"}, {{"1", "2"}}};
  EXPECT_NE(t.render().find("| 1 | 2 |"), std::string::npos) << t.render();
}
