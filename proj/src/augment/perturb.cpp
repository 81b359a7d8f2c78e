#include "caps/augment/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "caps/util/errors.hpp"

namespace caps::augment {

namespace {

std::uint8_t to_byte(double v) {
  const long r = std::lround(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
}

void check_range(const char* what, double v, const Range& r) {
  if (!r.contains(v))
    throw RangeError(std::string(what) + " = " + std::to_string(v) + " outside configured range [" +
                     std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
}

void check_unit(const char* what, double v) { check_range(what, v, Range{0.0, 1.0}); }

void check_ordered(const char* what, const Range& r) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
    throw ConfigError(std::string("augment.") + what + ": range must satisfy lo <= hi");
}

Image brightness(const Image& in, double f) {
  Image out = in;
  for (auto& p : out.pixels) p = to_byte(p * f);
  return out;
}

Image contrast(const Image& in, double c) {
  double mean = 0.0;
  for (auto p : in.pixels) mean += p;
  mean /= static_cast<double>(std::max<std::size_t>(in.pixels.size(), 1));
  Image out = in;
  for (auto& p : out.pixels) p = to_byte((p - mean) * c + mean);
  return out;
}

Image rotate(const Image& in, double degrees) {
  if (degrees == 0.0) return in;
  const double th = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const double cx = (in.width - 1) / 2.0, cy = (in.height - 1) / 2.0;
  Image out(in.height, in.width, in.channels, 0);
  const auto sample = [&](int x, int y, int c) -> double {
    if (x < 0 || y < 0 || x >= in.width || y >= in.height) return 0.0;
    return in.at(y, x, c);
  };
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      // Inverse mapping: rotate the output coordinate by -theta.
      const double dx = x - cx, dy = y - cy;
      const double sx = cx + cs * dx + sn * dy;
      const double sy = cy - sn * dx + cs * dy;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < in.channels; ++c) {
        const double v = (1 - fx) * (1 - fy) * sample(x0, y0, c) + fx * (1 - fy) * sample(x0 + 1, y0, c) +
                         (1 - fx) * fy * sample(x0, y0 + 1, c) + fx * fy * sample(x0 + 1, y0 + 1, c);
        out.at(y, x, c) = to_byte(v);
      }
    }
  }
  return out;
}

Image salt_pepper(const Image& in, const SaltPepperParams& p) {
  Image out = in;
  if (p.probability <= 0.0) return out;
  Rng noise(p.noise_seed);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      if (noise.uniform() >= p.probability) continue;
      const std::uint8_t value = noise.uniform() < p.salt_fraction ? 255 : 0;
      for (int c = 0; c < in.channels; ++c) out.at(y, x, c) = value;
    }
  }
  return out;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

Image gaussian_blur(const Image& in, double sigma) {
  if (sigma <= 0.0) return in;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> weights(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double w = std::exp(-(k * k) / (2.0 * sigma * sigma));
    weights[static_cast<std::size_t>(k + radius)] = w;
    total += w;
  }
  for (auto& w : weights) w /= total;

  const int h = in.height, w = in.width, ch = in.channels;
  std::vector<double> tmp(in.pixels.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += weights[static_cast<std::size_t>(k + radius)] * in.at(y, reflect_index(x + k, w), c);
        tmp[in.index(y, x, c)] = acc;
      }
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += weights[static_cast<std::size_t>(k + radius)] * tmp[in.index(reflect_index(y + k, h), x, c)];
        out.at(y, x, c) = to_byte(acc);
      }
  return out;
}

Image cutoff(const Image& in, const CutoffParams& p) {
  Image out = in;
  const double area = p.area_fraction * in.width * in.height;
  if (area <= 0.0) return out;
  const double rw = std::sqrt(area * p.aspect);
  const double rh = area / rw;
  const int w = std::clamp(static_cast<int>(std::lround(rw)), 0, in.width);
  const int h = std::clamp(static_cast<int>(std::lround(rh)), 0, in.height);
  if (w == 0 || h == 0) return out;
  const int x0 = std::clamp(static_cast<int>(std::lround(p.center_x * in.width - w / 2.0)), 0, in.width - w);
  const int y0 = std::clamp(static_cast<int>(std::lround(p.center_y * in.height - h / 2.0)), 0, in.height - h);
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x)
      for (int c = 0; c < in.channels; ++c) out.at(y, x, c) = 0;
  return out;
}

Image reflection(const Image& in, const ReflectionParams& p) {
  Image out = in;
  if (p.intensity == 0.0) return out;
  const double half_width = std::max(0.5, p.width_fraction * in.width / 2.0);
  const double slope = std::tan(p.slant_deg * std::numbers::pi / 180.0);
  for (int y = 0; y < in.height; ++y) {
    const double center = p.position * in.width + slope * (y - in.height / 2.0);
    for (int x = 0; x < in.width; ++x) {
      const double profile = std::max(0.0, 1.0 - std::fabs(x - center) / half_width);
      if (profile <= 0.0) continue;
      for (int c = 0; c < in.channels; ++c) out.at(y, x, c) = to_byte(in.at(y, x, c) + p.intensity * profile);
    }
  }
  return out;
}

Image hsv_shift(const Image& in, const HsvParams& p) {
  Image out = in;
  if (in.channels < 3) return out;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      Hsv hsv = rgb_to_hsv(in.at(y, x, 0) / 255.0, in.at(y, x, 1) / 255.0, in.at(y, x, 2) / 255.0);
      hsv.h = std::fmod(hsv.h + p.hue_deg, 360.0);
      if (hsv.h < 0) hsv.h += 360.0;
      hsv.s = std::clamp(hsv.s * (1.0 + p.saturation), 0.0, 1.0);
      hsv.v = std::clamp(hsv.v * (1.0 + p.value), 0.0, 1.0);
      const auto rgb = hsv_to_rgb(hsv);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = to_byte(rgb[static_cast<std::size_t>(c)] * 255.0);
    }
  return out;
}

}  // namespace

std::string_view to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::brightness: return "brightness";
    case PerturbationKind::contrast: return "contrast";
    case PerturbationKind::rotation: return "rotation";
    case PerturbationKind::salt_pepper: return "salt_pepper";
    case PerturbationKind::gaussian_blur: return "gaussian_blur";
    case PerturbationKind::cutoff: return "cutoff";
    case PerturbationKind::reflection: return "reflection";
    case PerturbationKind::hsv_shift: return "hsv_shift";
  }
  return "unknown";
}

std::optional<PerturbationKind> parse_kind(std::string_view name) {
  for (PerturbationKind k : kAllKinds)
    if (to_string(k) == name) return k;
  if (name == "blur") return PerturbationKind::gaussian_blur;
  return std::nullopt;
}

void PerturbationConfig::validate() const {
  check_ordered("brightness_factor", brightness_factor);
  check_ordered("contrast_factor", contrast_factor);
  check_ordered("rotation_deg", rotation_deg);
  check_ordered("salt_pepper_prob", salt_pepper_prob);
  check_ordered("blur_sigma", blur_sigma);
  check_ordered("reflection_intensity", reflection_intensity);
  check_ordered("reflection_width", reflection_width);
  check_ordered("hue_shift_deg", hue_shift_deg);
  check_ordered("saturation_shift", saturation_shift);
  check_ordered("value_shift", value_shift);
  if (salt_pepper_prob.lo < 0.0 || salt_pepper_prob.hi > 1.0)
    throw ConfigError("augment.salt_pepper_prob must lie in [0, 1]");
  if (salt_fraction < 0.0 || salt_fraction > 1.0) throw ConfigError("augment.salt_fraction must lie in [0, 1]");
  if (blur_sigma.lo < 0.0) throw ConfigError("augment.blur_sigma must be >= 0");
  if (brightness_factor.lo < 0.0 || contrast_factor.lo < 0.0)
    throw ConfigError("augment brightness/contrast factors must be >= 0");
  if (cutoff_max_area < 0.0 || cutoff_max_area > 1.0) throw ConfigError("augment.cutoff_max_area must lie in [0, 1]");
  if (reflection_width.lo < 0.0 || reflection_width.hi > 1.0)
    throw ConfigError("augment.reflection_width must lie in [0, 1]");
  if (saturation_shift.lo < -1.0 || value_shift.lo < -1.0)
    throw ConfigError("augment saturation/value shifts must be >= -1");
}

PerturbationKind kind_of(const PerturbationParams& params) {
  return std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, BrightnessParams>) return PerturbationKind::brightness;
        else if constexpr (std::is_same_v<T, ContrastParams>) return PerturbationKind::contrast;
        else if constexpr (std::is_same_v<T, RotationParams>) return PerturbationKind::rotation;
        else if constexpr (std::is_same_v<T, SaltPepperParams>) return PerturbationKind::salt_pepper;
        else if constexpr (std::is_same_v<T, BlurParams>) return PerturbationKind::gaussian_blur;
        else if constexpr (std::is_same_v<T, CutoffParams>) return PerturbationKind::cutoff;
        else if constexpr (std::is_same_v<T, ReflectionParams>) return PerturbationKind::reflection;
        else return PerturbationKind::hsv_shift;
      },
      params);
}

PerturbationParams sample_params(PerturbationKind kind, const PerturbationConfig& cfg, Rng& rng) {
  const auto draw = [&rng](const Range& r) { return rng.uniform(r.lo, r.hi); };
  switch (kind) {
    case PerturbationKind::brightness: return BrightnessParams{draw(cfg.brightness_factor)};
    case PerturbationKind::contrast: return ContrastParams{draw(cfg.contrast_factor)};
    case PerturbationKind::rotation: return RotationParams{draw(cfg.rotation_deg)};
    case PerturbationKind::salt_pepper:
      return SaltPepperParams{draw(cfg.salt_pepper_prob), cfg.salt_fraction, rng.next_u64()};
    case PerturbationKind::gaussian_blur: return BlurParams{draw(cfg.blur_sigma)};
    case PerturbationKind::cutoff: {
      CutoffParams p;
      p.area_fraction = rng.uniform(0.0, cfg.cutoff_max_area);
      p.aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
      p.center_x = rng.uniform();
      p.center_y = rng.uniform();
      return p;
    }
    case PerturbationKind::reflection: {
      ReflectionParams p;
      p.intensity = draw(cfg.reflection_intensity);
      p.width_fraction = draw(cfg.reflection_width);
      p.position = rng.uniform();
      p.slant_deg = rng.uniform(-20.0, 20.0);
      return p;
    }
    case PerturbationKind::hsv_shift:
      return HsvParams{draw(cfg.hue_shift_deg), draw(cfg.saturation_shift), draw(cfg.value_shift)};
  }
  throw ConfigError("unknown perturbation kind");
}

Image apply(const PerturbationParams& params, const Image& image, const PerturbationConfig& cfg) {
  return std::visit(
      [&](const auto& p) -> Image {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, BrightnessParams>) {
          check_range("brightness factor", p.factor, cfg.brightness_factor);
          return brightness(image, p.factor);
        } else if constexpr (std::is_same_v<T, ContrastParams>) {
          check_range("contrast factor", p.factor, cfg.contrast_factor);
          return contrast(image, p.factor);
        } else if constexpr (std::is_same_v<T, RotationParams>) {
          check_range("rotation angle", p.degrees, cfg.rotation_deg);
          return rotate(image, p.degrees);
        } else if constexpr (std::is_same_v<T, SaltPepperParams>) {
          check_range("salt/pepper probability", p.probability, cfg.salt_pepper_prob);
          check_unit("salt fraction", p.salt_fraction);
          return salt_pepper(image, p);
        } else if constexpr (std::is_same_v<T, BlurParams>) {
          check_range("blur sigma", p.sigma, cfg.blur_sigma);
          return gaussian_blur(image, p.sigma);
        } else if constexpr (std::is_same_v<T, CutoffParams>) {
          check_range("cutoff area", p.area_fraction, Range{0.0, cfg.cutoff_max_area});
          check_unit("cutoff centre x", p.center_x);
          check_unit("cutoff centre y", p.center_y);
          if (!(p.aspect > 0.0)) throw RangeError("cutoff aspect must be positive");
          return cutoff(image, p);
        } else if constexpr (std::is_same_v<T, ReflectionParams>) {
          check_range("reflection intensity", p.intensity, cfg.reflection_intensity);
          check_range("reflection width", p.width_fraction, cfg.reflection_width);
          check_unit("reflection position", p.position);
          return reflection(image, p);
        } else {
          check_range("hue shift", p.hue_deg, cfg.hue_shift_deg);
          check_range("saturation shift", p.saturation, cfg.saturation_shift);
          check_range("value shift", p.value, cfg.value_shift);
          return hsv_shift(image, p);
        }
      },
      params);
}

std::vector<PerturbationParams> sample_phi_params(const PerturbationConfig& cfg, Rng& rng) {
  if (cfg.phi_enabled.empty()) throw ConfigError("spatial-smoothness distribution has no enabled perturbation");
  std::vector<PerturbationParams> out;
  if (cfg.phi_compose) {
    for (PerturbationKind k : cfg.phi_enabled) out.push_back(sample_params(k, cfg, rng));
  } else {
    const PerturbationKind k = cfg.phi_enabled[rng.index(cfg.phi_enabled.size())];
    out.push_back(sample_params(k, cfg, rng));
  }
  return out;
}

Image apply_all(const std::vector<PerturbationParams>& params, const Image& image, const PerturbationConfig& cfg) {
  Image out = image;
  for (const auto& p : params) out = apply(p, out, cfg);
  return out;
}

Image sample_phi(const PerturbationConfig& cfg, const Image& image, Rng& rng) {
  return apply_all(sample_phi_params(cfg, rng), image, cfg);
}

Image sim2real_pipeline(const PerturbationConfig& cfg, const Image& image, Rng& rng) {
  Image out = image;
  for (PerturbationKind k : kSim2RealOrder) {
    if (std::find(cfg.sim2real_enabled.begin(), cfg.sim2real_enabled.end(), k) == cfg.sim2real_enabled.end())
      continue;
    out = apply(sample_params(k, cfg, rng), out, cfg);
  }
  return out;
}

Image InvertTranslator::translate(const Image& image) const {
  Image out = image;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(255 - p);
  return out;
}

std::shared_ptr<const ObservationTranslator> make_translator(std::string_view name) {
  if (name == "identity") return std::make_shared<IdentityTranslator>();
  if (name == "invert") return std::make_shared<InvertTranslator>();
  throw ConfigError("unknown observation translator '" + std::string(name) + "' (known: identity, invert)");
}

Image contact_sheet(const Image& source, const PerturbationConfig& cfg, const std::vector<PerturbationKind>& kinds,
                    int columns, int scale, Rng& rng) {
  constexpr int kGap = 2;
  const int tile_w = source.width * scale, tile_h = source.height * scale;
  const int cols = columns + 1;  // first column shows the source
  const int rows = static_cast<int>(kinds.size());
  Image sheet(rows * (tile_h + kGap) + kGap, cols * (tile_w + kGap) + kGap, 3, 255);
  const auto blit = [&](const Image& tile, int row, int col) {
    const int oy = kGap + row * (tile_h + kGap), ox = kGap + col * (tile_w + kGap);
    for (int y = 0; y < tile_h; ++y)
      for (int x = 0; x < tile_w; ++x)
        for (int c = 0; c < 3; ++c) sheet.at(oy + y, ox + x, c) = tile.at(y / scale, x / scale, c);
  };
  for (int r = 0; r < rows; ++r) {
    blit(source, r, 0);
    for (int c = 0; c < columns; ++c)
      blit(apply(sample_params(kinds[static_cast<std::size_t>(r)], cfg, rng), source, cfg), r, c + 1);
  }
  return sheet;
}

}  // namespace caps::augment
