#include "caps/harness/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include "caps/util/errors.hpp"

namespace caps::harness {

using nlohmann::json;

namespace {

struct Limits {
  std::optional<double> min;
  std::optional<double> max;
  bool exclusive_min = false;
};

constexpr Limits kAny{};
constexpr Limits kNonNeg{0.0, std::nullopt, false};
constexpr Limits kPositive{0.0, std::nullopt, true};
constexpr Limits kAtLeastOne{1.0, std::nullopt, false};
constexpr Limits kUnit{0.0, 1.0, false};

enum class Mode { write, read, schema };

// Walks every config field once; the same walk serializes, parses and
// describes the document, so the three cannot drift apart.
class Binder {
 public:
  Binder(Mode mode, json* doc) : mode_(mode) { stack_.push_back({doc, ""}); }

  void number(const char* key, double& v, Limits lim = kAny) {
    leaf(key, v, "number", lim, [&](const json& j) {
      if (!j.is_number()) fail(key, "expected a number");
      v = j.get<double>();
      if (!std::isfinite(v)) fail(key, "must be finite");
    });
  }

  template <class I>
  void integer(const char* key, I& v, Limits lim = kAny) {
    leaf(key, v, "integer", lim, [&](const json& j) {
      if (!j.is_number_integer()) fail(key, "expected an integer");
      if constexpr (std::is_unsigned_v<I>) {
        if (j.is_number_unsigned()) v = static_cast<I>(j.get<std::uint64_t>());
        else if (j.get<std::int64_t>() < 0) fail(key, "must be >= 0");
        else v = static_cast<I>(j.get<std::int64_t>());
      } else {
        v = static_cast<I>(j.get<std::int64_t>());
      }
    });
  }

  void boolean(const char* key, bool& v) {
    leaf(key, v, "boolean", kAny, [&](const json& j) {
      if (!j.is_boolean()) fail(key, "expected true or false");
      v = j.get<bool>();
    });
  }

  void string(const char* key, std::string& v, std::vector<std::string> choices = {}) {
    if (mode_ == Mode::schema) {
      json s{{"type", "string"}, {"default", v}};
      if (!choices.empty()) s["enum"] = choices;
      props()[key] = s;
      return;
    }
    if (mode_ == Mode::write) {
      (*cur())[key] = v;
      return;
    }
    if (const json* j = take(key)) {
      if (!j->is_string()) fail(key, "expected a string");
      v = j->get<std::string>();
      if (!choices.empty() && std::find(choices.begin(), choices.end(), v) == choices.end()) {
        std::string list;
        for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
        fail(key, "must be one of: " + list);
      }
    }
  }

  void range(const char* key, augment::Range& r) {
    if (mode_ == Mode::schema) {
      props()[key] = {{"type", "array"},
                      {"items", {{"type", "number"}}},
                      {"minItems", 2},
                      {"maxItems", 2},
                      {"default", {r.lo, r.hi}}};
      return;
    }
    if (mode_ == Mode::write) {
      (*cur())[key] = {r.lo, r.hi};
      return;
    }
    if (const json* j = take(key)) {
      if (!j->is_array() || j->size() != 2 || !(*j)[0].is_number() || !(*j)[1].is_number())
        fail(key, "expected [lo, hi]");
      r = {(*j)[0].get<double>(), (*j)[1].get<double>()};
    }
  }

  void kinds(const char* key, std::vector<augment::PerturbationKind>& v) {
    std::vector<std::string> names;
    for (auto k : augment::kAllKinds) names.emplace_back(augment::to_string(k));
    if (mode_ == Mode::schema) {
      json def = json::array();
      for (auto k : v) def.push_back(std::string(augment::to_string(k)));
      props()[key] = {{"type", "array"}, {"items", {{"type", "string"}, {"enum", names}}}, {"uniqueItems", true},
                      {"default", def}};
      return;
    }
    if (mode_ == Mode::write) {
      json arr = json::array();
      for (auto k : v) arr.push_back(std::string(augment::to_string(k)));
      (*cur())[key] = arr;
      return;
    }
    if (const json* j = take(key)) {
      if (!j->is_array()) fail(key, "expected an array of perturbation names");
      v.clear();
      for (const auto& e : *j) {
        if (!e.is_string()) fail(key, "expected perturbation names");
        auto k = augment::parse_kind(e.get<std::string>());
        if (!k) fail(key, "unknown perturbation '" + e.get<std::string>() + "'");
        if (std::find(v.begin(), v.end(), *k) != v.end()) fail(key, "duplicate perturbation '" + e.get<std::string>() + "'");
        v.push_back(*k);
      }
    }
  }

  template <class E>
  void number_list(const char* key, std::vector<E>& v, const char* item_type) {
    if (mode_ == Mode::schema) {
      props()[key] = {{"type", "array"}, {"items", {{"type", item_type}}}, {"default", v}};
      return;
    }
    if (mode_ == Mode::write) {
      (*cur())[key] = v;
      return;
    }
    if (const json* j = take(key)) {
      if (!j->is_array()) fail(key, "expected an array");
      v.clear();
      for (const auto& e : *j) {
        if constexpr (std::is_integral_v<E>) {
          if (!e.is_number_integer() || (e.is_number_integer() && !e.is_number_unsigned() && e.get<std::int64_t>() < 0))
            fail(key, "expected non-negative integers");
        } else if (!e.is_number()) {
          fail(key, "expected numbers");
        }
        v.push_back(e.get<E>());
      }
    }
  }

  void convs(const char* key, std::vector<nn::ConvSpec>& v) {
    auto to = [](const nn::ConvSpec& c) { return json{{"channels", c.channels}, {"kernel", c.kernel}, {"stride", c.stride}}; };
    if (mode_ == Mode::schema) {
      json def = json::array();
      for (const auto& c : v) def.push_back(to(c));
      json item{{"type", "object"},
                {"additionalProperties", false},
                {"required", {"channels", "kernel", "stride"}},
                {"properties",
                 {{"channels", {{"type", "integer"}, {"minimum", 1}}},
                  {"kernel", {{"type", "integer"}, {"minimum", 1}}},
                  {"stride", {{"type", "integer"}, {"minimum", 1}}}}}};
      props()[key] = {{"type", "array"}, {"minItems", 1}, {"items", item}, {"default", def}};
      return;
    }
    if (mode_ == Mode::write) {
      json arr = json::array();
      for (const auto& c : v) arr.push_back(to(c));
      (*cur())[key] = arr;
      return;
    }
    if (const json* j = take(key)) {
      if (!j->is_array()) fail(key, "expected an array of {channels, kernel, stride}");
      v.clear();
      for (const auto& e : *j) {
        if (!e.is_object() || e.size() != 3 || !e.contains("channels") || !e.contains("kernel") || !e.contains("stride"))
          fail(key, "entries need exactly channels, kernel and stride");
        for (const char* f : {"channels", "kernel", "stride"})
          if (!e.at(f).is_number_integer()) fail(key, std::string(f) + " must be an integer");
        v.push_back({e.at("channels").get<int>(), e.at("kernel").get<int>(), e.at("stride").get<int>()});
      }
    }
  }

  void section(const char* key, const std::function<void()>& body) {
    json* child = nullptr;
    json scratch;
    if (mode_ == Mode::schema) {
      json& s = props()[key];
      s = {{"type", "object"}, {"additionalProperties", false}, {"properties", json::object()}};
      child = &s;
    } else if (mode_ == Mode::write) {
      child = &(*cur())[key];
      *child = json::object();
    } else {
      const json* j = take(key);
      if (!j) {
        scratch = json::object();
        child = &scratch;
      } else {
        if (!j->is_object()) fail(key, "expected an object");
        child = const_cast<json*>(j);
      }
    }
    stack_.push_back({child, path(key)});
    seen_.emplace_back();
    body();
    if (mode_ == Mode::read) finish_object();
    seen_.pop_back();
    stack_.pop_back();
  }

  void begin_root() { seen_.emplace_back(); }
  void end_root() {
    if (mode_ == Mode::read) finish_object();
    seen_.pop_back();
  }

 private:
  struct Frame {
    json* node;
    std::string path;
  };

  std::string path(const char* key) const {
    return stack_.back().path.empty() ? std::string(key) : stack_.back().path + "." + key;
  }
  [[noreturn]] void fail(const char* key, const std::string& msg) const {
    throw ConfigError("config key '" + path(key) + "': " + msg);
  }
  json* cur() { return stack_.back().node; }
  json& props() {
    json* n = cur();
    return (*n)["properties"];
  }
  const json* take(const char* key) {
    seen_.back().insert(key);
    const json* n = cur();
    auto it = n->find(key);
    return it == n->end() ? nullptr : &*it;
  }
  void finish_object() {
    for (const auto& [k, v] : cur()->items())
      if (!seen_.back().count(k)) {
        const std::string p = stack_.back().path.empty() ? k : stack_.back().path + "." + k;
        throw ConfigError("unknown config key '" + p + "'");
      }
  }

  template <class V, class F>
  void leaf(const char* key, V& v, const char* type, Limits lim, F&& read) {
    if (mode_ == Mode::schema) {
      json s{{"type", type}, {"default", v}};
      if (lim.min) s[lim.exclusive_min ? "exclusiveMinimum" : "minimum"] = *lim.min;
      if (lim.max) s["maximum"] = *lim.max;
      props()[key] = s;
      return;
    }
    if (mode_ == Mode::write) {
      (*cur())[key] = v;
      return;
    }
    if (const json* j = take(key)) {
      read(*j);
      const double d = static_cast<double>(v);
      if (lim.min && (lim.exclusive_min ? !(d > *lim.min) : !(d >= *lim.min)))
        fail(key, std::string("must be ") + (lim.exclusive_min ? "> " : ">= ") + json(*lim.min).dump());
      if (lim.max && !(d <= *lim.max)) fail(key, "must be <= " + json(*lim.max).dump());
    }
  }

  Mode mode_;
  std::vector<Frame> stack_;
  std::vector<std::set<std::string>> seen_;
};

void bind(Binder& b, ExperimentConfig& c) {
  b.string("preset", c.preset);
  b.integer("seed", c.seed);
  b.string("out_dir", c.out_dir);
  b.string("track", c.track);
  b.section("env", [&] {
    auto& e = c.env;
    b.number("dt", e.dt, kPositive);
    b.integer("max_episode_steps", e.max_episode_steps, kAtLeastOne);
    b.section("speed", [&] {
      b.number("v_min", e.speed.v_min, kNonNeg);
      b.number("v_max", e.speed.v_max, kPositive);
    });
    b.section("vehicle", [&] {
      b.number("wheelbase", e.vehicle.wheelbase, kPositive);
      b.number("steering_limit", e.vehicle.steering_limit, kPositive);
      b.number("speed_time_constant", e.vehicle.speed_time_constant, kNonNeg);
      b.number("steering_time_constant", e.vehicle.steering_time_constant, kNonNeg);
    });
    b.section("camera", [&] {
      auto& k = e.camera;
      b.integer("height", k.height, kAtLeastOne);
      b.integer("width", k.width, kAtLeastOne);
      b.number("mount_height", k.mount_height, kPositive);
      b.number("mount_forward", k.mount_forward);
      b.number("pitch", k.pitch);
      b.number("horizontal_fov", k.horizontal_fov, kPositive);
      b.number("max_view_distance", k.max_view_distance, kPositive);
      b.number("wall_band", k.wall_band, kNonNeg);
      b.integer("supersample", k.supersample, kAtLeastOne);
    });
    b.section("reward", [&] {
      b.number("progress_scale", e.reward.progress_scale);
      b.number("speed_bonus", e.reward.speed_bonus);
      b.number("collision_penalty", e.reward.collision_penalty);
    });
    b.section("jitter", [&] {
      b.boolean("enabled", e.jitter.enabled);
      b.number("position", e.jitter.position, kNonNeg);
      b.number("heading", e.jitter.heading, kNonNeg);
    });
  });
  b.section("sac", [&] {
    auto& s = c.sac;
    b.number("gamma", s.gamma, {0.0, 1.0, true});
    b.integer("n_step", s.n_step, kAtLeastOne);
    b.number("alpha_init", s.alpha_init, kPositive);
    b.boolean("auto_alpha", s.auto_alpha);
    b.number("target_entropy", s.target_entropy);
    b.integer("batch_size", s.batch_size, kAtLeastOne);
    b.number("lr", s.lr, kPositive);
    b.number("tau", s.tau, kUnit);
  });
  b.section("caps", [&] {
    b.number("lambda_t", c.lambda_t, kNonNeg);
    b.number("lambda_s", c.lambda_s, kNonNeg);
    b.boolean("sampled_actions", c.sampled_caps_actions);
  });
  b.section("augment", [&] {
    auto& a = c.augment;
    b.range("brightness_factor", a.brightness_factor);
    b.range("contrast_factor", a.contrast_factor);
    b.range("rotation_deg", a.rotation_deg);
    b.range("salt_pepper_prob", a.salt_pepper_prob);
    b.number("salt_fraction", a.salt_fraction, kUnit);
    b.range("blur_sigma", a.blur_sigma);
    b.number("cutoff_max_area", a.cutoff_max_area, kUnit);
    b.range("reflection_intensity", a.reflection_intensity);
    b.range("reflection_width", a.reflection_width);
    b.range("hue_shift_deg", a.hue_shift_deg);
    b.range("saturation_shift", a.saturation_shift);
    b.range("value_shift", a.value_shift);
    b.kinds("phi_enabled", a.phi_enabled);
    b.boolean("phi_compose", a.phi_compose);
    b.kinds("sim2real_enabled", a.sim2real_enabled);
  });
  b.section("replay", [&] {
    auto& r = c.replay;
    b.integer("global_capacity", r.global_capacity, kAtLeastOne);
    b.integer("local_capacity", r.local_capacity, kAtLeastOne);
    b.integer("flush_every", r.flush_every, kAtLeastOne);
    std::string mode = r.mode == replay::SampleMode::uniform ? "uniform" : "prioritized";
    b.string("mode", mode, {"prioritized", "uniform"});
    r.mode = mode == "uniform" ? replay::SampleMode::uniform : replay::SampleMode::prioritized;
    b.number("per_alpha", r.per_alpha, kNonNeg);
    b.number("per_beta", r.per_beta, kUnit);
    b.number("priority_eps", r.priority_eps, kPositive);
    b.integer("warmup", c.warmup, kNonNeg);
  });
  b.section("arch", [&] {
    b.convs("convs", c.arch.convs);
    b.integer("hidden", c.arch.hidden, kAtLeastOne);
    b.number("policy_head_scale", c.arch.policy_head_scale, kPositive);
  });
  b.section("run", [&] {
    auto& t = c.run;
    b.integer("workers", t.workers, kAtLeastOne);
    b.boolean("deterministic", t.deterministic);
    b.integer("env_steps_per_update", t.env_steps_per_update, kAtLeastOne);
    b.integer("step_budget", t.step_budget, kNonNeg);
    b.integer("update_budget", t.update_budget, kNonNeg);
    b.integer("publish_every", t.publish_every, kAtLeastOne);
    b.integer("checkpoint_every", t.checkpoint_every, kNonNeg);
    b.number("steering_penalty", t.steering_penalty, kNonNeg);
    b.string("translator", t.translator, {"identity", "invert"});
  });
  b.section("evaluate", [&] {
    b.integer("runs", c.evaluate.runs, kAtLeastOne);
    b.string("speed_preset", c.evaluate.speed_preset, {"c1", "c2", "c3", "train"});
    b.integer("seed", c.evaluate.seed);
    b.boolean("jitter", c.evaluate.jitter);
  });
  b.section("sweep", [&] {
    b.number_list("lambda_t_values", c.sweep.lambda_t_values, "number");
    b.number_list("seeds", c.sweep.seeds, "integer");
  });
  b.section("metrics", [&] {
    b.string("units", c.metrics.units, {"normalized", "physical"});
    b.boolean("remove_mean", c.metrics.remove_mean);
  });
}

}  // namespace

void ExperimentConfig::validate() const {
  auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  wrap("env", [&] { env.validate(); });
  wrap("sac", [&] { sac.validate(); });
  wrap("caps", [&] {
    sac::CapsConfig caps{lambda_t, lambda_s, sampled_caps_actions, augment};
    caps.validate();
  });
  wrap("augment", [&] { augment.validate(); });
  wrap("replay", [&] { replay.validate(); });
  wrap("arch", [&] { arch.validate(); });
  wrap("run", [&] { run.validate(); });
  if (warmup > static_cast<std::int64_t>(replay.global_capacity))
    throw ConfigError("config key 'replay.warmup': must not exceed replay.global_capacity");
  if (static_cast<std::size_t>(sac.batch_size) > replay.global_capacity)
    throw ConfigError("config key 'sac.batch_size': must not exceed replay.global_capacity");
  if (evaluate.runs < 1) throw ConfigError("config key 'evaluate.runs': must be >= 1");
  if (sweep.lambda_t_values.empty()) throw ConfigError("config key 'sweep.lambda_t_values': needs at least one value");
  if (sweep.seeds.empty()) throw ConfigError("config key 'sweep.seeds': needs at least one seed");
  for (double v : sweep.lambda_t_values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("config key 'sweep.lambda_t_values': values must be >= 0");
  if (track.rfind("builtin:", 0) == 0) {
    if (track != "builtin:default") throw ConfigError("config key 'track': unknown builtin track '" + track + "'");
  } else if (!std::ifstream(track)) {
    throw ConfigError("config key 'track': file not found: " + track);
  }
  // Architecture must fit the camera.
  try {
    nn::PolicyNet<float> probe({nn::kStackChannels, env.camera.height, env.camera.width}, arch);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("arch does not fit the camera: ") + e.what());
  }
}

json to_json(const ExperimentConfig& cfg) {
  json doc = json::object();
  ExperimentConfig copy = cfg;
  Binder b(Mode::write, &doc);
  b.begin_root();
  bind(b, copy);
  b.end_root();
  return doc;
}

ExperimentConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config document must be a JSON object");
  ExperimentConfig cfg;
  json doc = j;
  Binder b(Mode::read, &doc);
  b.begin_root();
  bind(b, cfg);
  b.end_root();
  return cfg;
}

json experiment_schema() {
  json schema{{"$schema", "https://json-schema.org/draft/2020-12/schema"},
              {"title", "caps_racer experiment configuration"},
              {"type", "object"},
              {"additionalProperties", false},
              {"properties", json::object()}};
  ExperimentConfig defaults;
  Binder b(Mode::schema, &schema);
  b.begin_root();
  bind(b, defaults);
  b.end_root();
  return schema;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
  (*node)[parts.back()] = value;
}

env::SpeedConfig speed_preset(std::string_view name) {
  if (name == "c1") return {0.35, 2.5};
  if (name == "c2") return {0.35, 2.8};
  if (name == "c3") return {1.0, 2.9};
  throw ConfigError("unknown speed preset '" + std::string(name) + "' (valid: c1, c2, c3)");
}

std::vector<std::string> speed_preset_names() { return {"c1", "c2", "c3"}; }

std::shared_ptr<const env::TrackSpec> load_track_ref(const std::string& ref) {
  if (ref == "builtin:default") return std::make_shared<const env::TrackSpec>(env::load_track(env::default_track_json()));
  return std::make_shared<const env::TrackSpec>(env::load_track_file(ref));
}

replay::TrainingSetup make_training_setup(const ExperimentConfig& cfg) {
  replay::TrainingSetup s;
  s.track = load_track_ref(cfg.track);
  s.env = cfg.env;
  s.sac = cfg.sac;
  s.caps = {cfg.lambda_t, cfg.lambda_s, cfg.sampled_caps_actions, cfg.augment};
  s.arch = cfg.arch;
  s.replay = cfg.replay;
  s.trainer = cfg.run;
  s.trainer.seed = cfg.seed;
  s.trainer.warmup = cfg.warmup;
  s.out_dir = cfg.out_dir;
  return s;
}

}  // namespace caps::harness
