#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "caps/harness/config.hpp"

namespace caps::harness {

std::vector<std::string> preset_names();

// Throws ConfigError listing the valid names when `name` is unknown.
ExperimentConfig preset(std::string_view name);

// The six baseline/sim-to-real comparison models, in table order.
std::vector<std::string> comparison_model_presets();

// Short label of a perturbation for report rows ("blur" for gaussian_blur).
std::string short_kind_name(augment::PerturbationKind kind);

}  // namespace caps::harness
