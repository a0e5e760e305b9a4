#pragma once

// Observation corruptions used to build the pixel OOD variants: gaussian
// noise, impulse (salt and pepper) noise, angled motion blur and pixelation.

#include <optional>
#include <string>
#include <vector>

#include "oodrl/frame.hpp"
#include "oodrl/rng.hpp"

namespace oodrl::corruptions {

enum class Kind { gaussian, impulse, motion_blur, pixelate };

std::string to_string(Kind k);
Kind kind_from_string(const std::string& s);  // throws ConfigError

struct CorruptionSpec {
  Kind kind = Kind::gaussian;
  double sigma = 0.0;  // gaussian noise std, or motion-blur kernel std
  double p = 0.0;      // impulse: fraction of pixels hit
  int rho = 0;         // motion blur: kernel radius, size 2*rho+1
  double f = 1.0;      // pixelate: downscale factor
  std::optional<int> severity;  // 1..5 when taken from the grid

  static CorruptionSpec gaussian(double sigma);
  static CorruptionSpec impulse(double p);
  static CorruptionSpec motion_blur(int rho, double sigma);
  static CorruptionSpec pixelate(double f);

  void validate() const;  // throws ConfigError

  // Parameter text used in variant ids, e.g. "0.18" or "15x8".
  std::string parameter_label() const;

  bool operator==(const CorruptionSpec&) const = default;
};

// Parses a kind plus parameter label ("0.18", "15x8") into a spec.
CorruptionSpec parse_spec(Kind kind, const std::string& parameter_label);

Frame corrupt(const Frame& frame, const CorruptionSpec& spec, Rng& rng);

// The five severity levels of a corruption kind, mildest first, labelled 1..5.
std::vector<CorruptionSpec> severity_grid(Kind kind);
CorruptionSpec severity(Kind kind, int level);

// Building blocks, exposed for tests and previews.
std::vector<double> gaussian_kernel_1d(int rho, double sigma);
Frame motion_blur_kernel(int rho, double sigma, double angle);
Frame convolve_replicate(const Frame& frame, const Frame& kernel);
Frame area_downscale(const Frame& frame, std::size_t width, std::size_t height);
Frame nearest_upscale(const Frame& frame, std::size_t width, std::size_t height);

}  // namespace oodrl::corruptions
