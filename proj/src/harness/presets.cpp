#include "caps/harness/presets.hpp"

#include "caps/util/errors.hpp"

namespace caps::harness {

namespace {

const std::vector<augment::PerturbationKind> kDomainRandomization{augment::kSim2RealOrder.begin(),
                                                                  augment::kSim2RealOrder.end()};

}  // namespace

std::vector<std::string> preset_names() {
  return {"sac_only",   "sac_steering_penalty", "sac_temporal",  "sac_spatial",        "sac_caps",
          "sac_dr",     "sac_dr_caps",          "sac_translate", "sac_translate_caps", "lambda_sweep",
          "spatial_ablation"};
}

std::vector<std::string> comparison_model_presets() {
  return {"sac_only", "sac_caps", "sac_dr", "sac_dr_caps", "sac_translate", "sac_translate_caps"};
}

ExperimentConfig preset(std::string_view name) {
  ExperimentConfig c;
  c.preset = std::string(name);
  c.out_dir = "runs/" + std::string(name);
  auto caps_on = [&] {
    c.lambda_t = 1.0;
    c.lambda_s = 1.0;
  };
  if (name == "sac_only") {
  } else if (name == "sac_steering_penalty") {
    c.run.steering_penalty = 0.003;
  } else if (name == "sac_temporal") {
    c.lambda_t = 1.0;
  } else if (name == "sac_spatial") {
    c.lambda_s = 1.0;
  } else if (name == "sac_caps" || name == "spatial_ablation") {
    caps_on();
  } else if (name == "sac_dr") {
    c.augment.sim2real_enabled = kDomainRandomization;
  } else if (name == "sac_dr_caps") {
    c.augment.sim2real_enabled = kDomainRandomization;
    caps_on();
  } else if (name == "sac_translate") {
    c.run.translator = "identity";
  } else if (name == "sac_translate_caps") {
    c.run.translator = "identity";
    caps_on();
  } else if (name == "lambda_sweep") {
    c.lambda_t = 1.0;
    c.lambda_s = 0.0;
  } else {
    std::string list;
    for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + std::string(name) + "'; valid presets: " + list);
  }
  return c;
}

std::string short_kind_name(augment::PerturbationKind kind) {
  if (kind == augment::PerturbationKind::gaussian_blur) return "blur";
  return std::string(augment::to_string(kind));
}

}  // namespace caps::harness
