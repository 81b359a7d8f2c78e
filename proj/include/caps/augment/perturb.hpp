#pragma once

// Image perturbations used for the spatial-smoothness state distribution and
// for training-time domain randomization.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "caps/util/image.hpp"
#include "caps/util/rng.hpp"

namespace caps::augment {

enum class PerturbationKind {
  brightness,
  contrast,
  rotation,
  salt_pepper,
  gaussian_blur,
  cutoff,
  reflection,
  hsv_shift,
};

inline constexpr std::array<PerturbationKind, 8> kAllKinds{
    PerturbationKind::brightness,  PerturbationKind::contrast,      PerturbationKind::rotation,
    PerturbationKind::salt_pepper, PerturbationKind::gaussian_blur, PerturbationKind::cutoff,
    PerturbationKind::reflection,  PerturbationKind::hsv_shift};

// The six methods forming the spatial-smoothness distribution by default.
inline constexpr std::array<PerturbationKind, 6> kPhiKinds{
    PerturbationKind::brightness,  PerturbationKind::contrast,      PerturbationKind::rotation,
    PerturbationKind::salt_pepper, PerturbationKind::gaussian_blur, PerturbationKind::cutoff};

// Sim-to-real pipeline members, in application order.
inline constexpr std::array<PerturbationKind, 3> kSim2RealOrder{
    PerturbationKind::hsv_shift, PerturbationKind::reflection, PerturbationKind::salt_pepper};

std::string_view to_string(PerturbationKind kind);
std::optional<PerturbationKind> parse_kind(std::string_view name);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct PerturbationConfig {
  Range brightness_factor{0.6, 1.4};
  Range contrast_factor{0.6, 1.4};
  Range rotation_deg{-5.0, 5.0};
  Range salt_pepper_prob{0.0, 0.02};
  double salt_fraction = 0.5;  // share of corrupted pixels set to white
  Range blur_sigma{0.0, 1.5};  // pixels
  double cutoff_max_area = 0.10;  // fraction of the image
  Range reflection_intensity{0.0, 80.0};  // added channel value at band centre
  Range reflection_width{0.05, 0.25};     // fraction of image width
  Range hue_shift_deg{-10.0, 10.0};
  Range saturation_shift{-0.2, 0.2};  // multiplicative factor is 1 + shift
  Range value_shift{-0.2, 0.2};

  std::vector<PerturbationKind> phi_enabled{kPhiKinds.begin(), kPhiKinds.end()};
  bool phi_compose = false;  // apply every enabled kind in sequence instead of one
  std::vector<PerturbationKind> sim2real_enabled;

  // Throws ConfigError on ill-ordered ranges, probabilities outside [0,1] or negative sigma.
  void validate() const;
};

struct BrightnessParams { double factor = 1.0; };
struct ContrastParams { double factor = 1.0; };
struct RotationParams { double degrees = 0.0; };
struct SaltPepperParams {
  double probability = 0.0;
  double salt_fraction = 0.5;
  std::uint64_t noise_seed = 0;
};
struct BlurParams { double sigma = 0.0; };
struct CutoffParams {
  double area_fraction = 0.0;
  double aspect = 1.0;    // width / height of the rectangle, in pixels
  double center_x = 0.5;  // fractions of image size
  double center_y = 0.5;
};
struct ReflectionParams {
  double intensity = 0.0;
  double width_fraction = 0.1;
  double position = 0.5;   // band centre as a fraction of image width
  double slant_deg = 0.0;  // band tilt from vertical
};
struct HsvParams {
  double hue_deg = 0.0;
  double saturation = 0.0;
  double value = 0.0;
};

using PerturbationParams = std::variant<BrightnessParams, ContrastParams, RotationParams, SaltPepperParams,
                                        BlurParams, CutoffParams, ReflectionParams, HsvParams>;

PerturbationKind kind_of(const PerturbationParams& params);

// Draws parameters for `kind` uniformly from the configured ranges.
PerturbationParams sample_params(PerturbationKind kind, const PerturbationConfig& cfg, Rng& rng);

// Applies one perturbation, returning a new image of the same size with
// channels in [0, 255]. Throws RangeError when a parameter lies outside the
// configured range.
Image apply(const PerturbationParams& params, const Image& image, const PerturbationConfig& cfg);

// Draws s' ~ Phi(s): one enabled kind chosen uniformly (or all of them when
// composing), parameters drawn uniformly, applied to the image.
// Throws ConfigError when no kind is enabled.
Image sample_phi(const PerturbationConfig& cfg, const Image& image, Rng& rng);

// The parameter draws sample_phi would make, without applying them.
std::vector<PerturbationParams> sample_phi_params(const PerturbationConfig& cfg, Rng& rng);
Image apply_all(const std::vector<PerturbationParams>& params, const Image& image,
                const PerturbationConfig& cfg);

// Applies the enabled sim-to-real perturbations in the order hsv_shift,
// reflection, salt_pepper, each with independently drawn parameters.
Image sim2real_pipeline(const PerturbationConfig& cfg, const Image& image, Rng& rng);

// Colour-space helpers; h in degrees [0, 360), s and v in [0, 1].
struct Hsv {
  double h, s, v;
};
Hsv rgb_to_hsv(double r, double g, double b);  // r, g, b in [0, 1]
std::array<double, 3> hsv_to_rgb(const Hsv& hsv);

// Observation-translator seam. The default is identity; a learned sim<->real
// translator can be installed behind this interface.
class ObservationTranslator {
 public:
  virtual ~ObservationTranslator() = default;
  virtual Image translate(const Image& image) const = 0;
  virtual std::string name() const = 0;
};

class IdentityTranslator final : public ObservationTranslator {
 public:
  Image translate(const Image& image) const override { return image; }
  std::string name() const override { return "identity"; }
};

// 255 - value on every channel.
class InvertTranslator final : public ObservationTranslator {
 public:
  Image translate(const Image& image) const override;
  std::string name() const override { return "invert"; }
};

// Known names: "identity", "invert". Throws ConfigError otherwise.
std::shared_ptr<const ObservationTranslator> make_translator(std::string_view name);

// Grid with one row per kind in `kinds` and `columns` samples each, drawn
// from the configured ranges; tiles are upscaled by `scale`.
Image contact_sheet(const Image& source, const PerturbationConfig& cfg,
                    const std::vector<PerturbationKind>& kinds, int columns, int scale, Rng& rng);

// Writes an 8-bit RGB PNG. Throws std::runtime_error on I/O failure.
void write_png(const Image& image, const std::string& path);

}  // namespace caps::augment
