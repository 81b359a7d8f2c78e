#pragma once

// Parameter files: 8-byte magic, little-endian uint64 header length, a JSON
// header (format version, arch hash, per-set version and array manifest),
// then the raw little-endian float32 arrays in manifest order.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "caps/nn/param_set.hpp"

namespace caps::nn {

inline constexpr int kParamFormatVersion = 1;

using NamedSet = std::pair<std::string, const ParamSet<float>*>;
using NamedSetOut = std::pair<std::string, ParamSet<float>*>;

// Hash over every set's layout, in order.
std::uint64_t bundle_hash(const std::vector<NamedSet>& sets);

void save_bundle(const std::string& path, const std::vector<NamedSet>& sets);

// Loads into sets whose layouts are already constructed. Throws FormatError for
// bad magic, version mismatch or truncation, and ShapeError when the stored
// manifest disagrees with the expected layouts.
void load_bundle(const std::string& path, const std::vector<NamedSetOut>& sets);

void save_params(const ParamSet<float>& params, const std::string& path);
void load_params(const std::string& path, ParamSet<float>& params);

}  // namespace caps::nn
