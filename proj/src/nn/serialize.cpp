#include "caps/nn/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "caps/nn/networks.hpp"
#include "json.hpp"

namespace caps::nn {
namespace {

constexpr char kMagic[8] = {'C', 'A', 'P', 'S', 'P', 'R', 'M', '\0'};

static_assert(std::endian::native == std::endian::little, "parameter files assume a little-endian host");

nlohmann::json manifest(const ParamSet<float>& p) {
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& a : p) arrays.push_back({{"name", a.name}, {"shape", a.shape}});
  return arrays;
}

}  // namespace

std::uint64_t bundle_hash(const std::vector<NamedSet>& sets) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, p] : sets) {
    h ^= layout_hash(*p);
    h *= 1099511628211ull;
  }
  return h;
}

void save_bundle(const std::string& path, const std::vector<NamedSet>& sets) {
  nlohmann::json header;
  header["format_version"] = kParamFormatVersion;
  header["dtype"] = "float32";
  header["arch_hash"] = std::to_string(bundle_hash(sets));
  header["sets"] = nlohmann::json::array();
  for (const auto& [name, p] : sets)
    header["sets"].push_back({{"name", name}, {"version", p->version}, {"arrays", manifest(*p)}});
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, p] : sets)
      for (const auto& a : *p)
        out.write(reinterpret_cast<const char*>(a.values.data()),
                  static_cast<std::streamsize>(a.values.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

void load_bundle(const std::string& path, const std::vector<NamedSetOut>& sets) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic)) throw FormatError(path + ": truncated file (magic)");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError(path + ": not a parameter file");
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len)) throw FormatError(path + ": truncated file (header length)");
  if (len > (1u << 26)) throw FormatError(path + ": implausible header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError(path + ": truncated file (header)");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": malformed header: " + e.what());
  }
  if (header.value("format_version", -1) != kParamFormatVersion)
    throw FormatError(path + ": format version " + header.value("format_version", nlohmann::json(-1)).dump() +
                      " does not match expected " + std::to_string(kParamFormatVersion));
  if (header.value("dtype", "") != "float32") throw FormatError(path + ": unsupported dtype");

  const auto& stored = header.at("sets");
  if (!stored.is_array() || stored.size() != sets.size())
    throw ShapeError(path + ": shape manifest lists " + std::to_string(stored.size()) + " sets, expected " +
                     std::to_string(sets.size()));
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& s = stored[i];
    if (s.at("name") != sets[i].first)
      throw ShapeError(path + ": shape manifest set '" + s.at("name").get<std::string>() + "' where '" +
                       sets[i].first + "' was expected");
    if (s.at("arrays") != manifest(*sets[i].second))
      throw ShapeError(path + ": shape manifest mismatch in set '" + sets[i].first + "'");
  }
  std::vector<NamedSet> views;
  for (const auto& [n, p] : sets) views.emplace_back(n, p);
  if (header.at("arch_hash").get<std::string>() != std::to_string(bundle_hash(views)))
    throw ShapeError(path + ": shape manifest hash mismatch");

  // Read into copies so a truncated file leaves the targets untouched.
  std::vector<ParamSet<float>> loaded;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    ParamSet<float> p = *sets[i].second;
    p.version = stored[i].at("version").get<std::uint64_t>();
    for (auto& a : p)
      if (!in.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(float))))
        throw FormatError(path + ": truncated file (array '" + a.name + "')");
    loaded.push_back(std::move(p));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path + ": trailing bytes after arrays");
  for (std::size_t i = 0; i < sets.size(); ++i) *sets[i].second = std::move(loaded[i]);
}

void save_params(const ParamSet<float>& params, const std::string& path) { save_bundle(path, {{"params", &params}}); }

void load_params(const std::string& path, ParamSet<float>& params) { load_bundle(path, {{"params", &params}}); }

}  // namespace caps::nn
