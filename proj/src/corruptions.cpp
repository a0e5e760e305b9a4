#include "oodrl/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "oodrl/error.hpp"
#include "oodrl/io.hpp"

namespace oodrl::corruptions {

namespace {

void require_frame(const Frame& frame) {
  if (frame.width == 0 || frame.height == 0) throw ShapeError("corrupt: zero-size frame");
  if (frame.pixels.size() != frame.width * frame.height)
    throw ShapeError("corrupt: pixel count does not match frame dimensions");
}

Frame add_gaussian(const Frame& in, double sigma, Rng& rng) {
  Frame out = in;
  if (sigma == 0.0) return out;
  for (auto& px : out.pixels) px = std::clamp(px + sigma * rng.normal(), 0.0, 1.0);
  return out;
}

Frame add_impulse(const Frame& in, double p, Rng& rng) {
  Frame out = in;
  const std::size_t n = in.pixels.size();
  const auto hits = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
  if (hits == 0) return out;
  // Partial Fisher-Yates: the first `hits` slots are a uniform sample without replacement.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < hits; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.index(n - i));
    std::swap(idx[i], idx[j]);
    out.pixels[idx[i]] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  return out;
}

// 1-D area-averaging weights: row j lists (source index, weight) pairs.
std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t src,
                                                                      std::size_t dst) {
  std::vector<std::vector<std::pair<std::size_t, double>>> w(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t j = 0; j < dst; ++j) {
    const double lo = static_cast<double>(j) * scale;
    const double hi = static_cast<double>(j + 1) * scale;
    auto first = static_cast<std::size_t>(std::floor(lo));
    auto last = std::min(src, static_cast<std::size_t>(std::ceil(hi)));
    for (std::size_t i = first; i < last; ++i) {
      const double overlap =
          std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) w[j].emplace_back(i, overlap / scale);
    }
  }
  return w;
}

}  // namespace

std::string to_string(Kind k) {
  switch (k) {
    case Kind::gaussian:
      return "gaussian";
    case Kind::impulse:
      return "impulse";
    case Kind::motion_blur:
      return "motion_blur";
    case Kind::pixelate:
      return "pixelate";
  }
  return "gaussian";
}

Kind kind_from_string(const std::string& s) {
  if (s == "gaussian") return Kind::gaussian;
  if (s == "impulse") return Kind::impulse;
  if (s == "motion_blur") return Kind::motion_blur;
  if (s == "pixelate") return Kind::pixelate;
  throw ConfigError("unknown corruption kind '" + s + "'");
}

CorruptionSpec CorruptionSpec::gaussian(double sigma) {
  CorruptionSpec s;
  s.kind = Kind::gaussian;
  s.sigma = sigma;
  return s;
}

CorruptionSpec CorruptionSpec::impulse(double p) {
  CorruptionSpec s;
  s.kind = Kind::impulse;
  s.p = p;
  return s;
}

CorruptionSpec CorruptionSpec::motion_blur(int rho, double sigma) {
  CorruptionSpec s;
  s.kind = Kind::motion_blur;
  s.rho = rho;
  s.sigma = sigma;
  return s;
}

CorruptionSpec CorruptionSpec::pixelate(double f) {
  CorruptionSpec s;
  s.kind = Kind::pixelate;
  s.f = f;
  return s;
}

void CorruptionSpec::validate() const {
  switch (kind) {
    case Kind::gaussian:
      if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("gaussian: sigma must be >= 0");
      break;
    case Kind::impulse:
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("impulse: p must lie in [0, 1]");
      break;
    case Kind::motion_blur:
      if (rho < 0) throw ConfigError("motion_blur: rho must be >= 0");
      if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw ConfigError("motion_blur: sigma must be >= 0");
      break;
    case Kind::pixelate:
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError("pixelate: f must lie in (0, 1]");
      break;
  }
  if (severity && (*severity < 1 || *severity > 5))
    throw ConfigError("corruption severity label must lie in 1..5");
}

std::string CorruptionSpec::parameter_label() const {
  switch (kind) {
    case Kind::gaussian:
      return io::format_double(sigma);
    case Kind::impulse:
      return io::format_double(p);
    case Kind::motion_blur:
      return std::to_string(rho) + "x" + io::format_double(sigma);
    case Kind::pixelate:
      return io::format_double(f);
  }
  return {};
}

CorruptionSpec parse_spec(Kind kind, const std::string& label) {
  CorruptionSpec s;
  try {
    switch (kind) {
      case Kind::gaussian:
        s = CorruptionSpec::gaussian(std::stod(label));
        break;
      case Kind::impulse:
        s = CorruptionSpec::impulse(std::stod(label));
        break;
      case Kind::motion_blur: {
        const auto x = label.find('x');
        if (x == std::string::npos) throw ConfigError("motion_blur parameter must look like RHOxSIGMA");
        s = CorruptionSpec::motion_blur(std::stoi(label.substr(0, x)), std::stod(label.substr(x + 1)));
        break;
      }
      case Kind::pixelate:
        s = CorruptionSpec::pixelate(std::stod(label));
        break;
    }
  } catch (const std::logic_error&) {
    throw ConfigError("bad corruption parameter '" + label + "'");
  }
  s.validate();
  for (const auto& g : severity_grid(kind))
    if (g.parameter_label() == s.parameter_label()) s.severity = g.severity;
  return s;
}

std::vector<double> gaussian_kernel_1d(int rho, double sigma) {
  if (rho < 0) throw ConfigError("kernel radius must be >= 0");
  std::vector<double> k(static_cast<std::size_t>(2 * rho + 1), 0.0);
  if (sigma == 0.0) {
    k[static_cast<std::size_t>(rho)] = 1.0;
    return k;
  }
  double total = 0.0;
  for (int i = -rho; i <= rho; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + rho)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

Frame motion_blur_kernel(int rho, double sigma, double angle) {
  const auto g = gaussian_kernel_1d(rho, sigma);
  const auto size = static_cast<std::size_t>(2 * rho + 1);
  Frame kernel(size, size, 0.0);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (int i = -rho; i <= rho; ++i) {
    const auto dx = std::lround(static_cast<double>(i) * c);
    const auto dy = std::lround(static_cast<double>(i) * s);
    kernel.at(static_cast<std::size_t>(rho + dx), static_cast<std::size_t>(rho + dy)) +=
        g[static_cast<std::size_t>(i + rho)];
  }
  return kernel;
}

Frame convolve_replicate(const Frame& frame, const Frame& kernel) {
  require_frame(frame);
  if (kernel.width % 2 == 0 || kernel.height % 2 == 0)
    throw ShapeError("convolve: kernel dimensions must be odd");
  struct Tap {
    long dx, dy;
    double w;
  };
  std::vector<Tap> taps;
  const long rx = static_cast<long>(kernel.width / 2);
  const long ry = static_cast<long>(kernel.height / 2);
  for (std::size_t ky = 0; ky < kernel.height; ++ky)
    for (std::size_t kx = 0; kx < kernel.width; ++kx)
      if (kernel.at(kx, ky) != 0.0)
        taps.push_back({static_cast<long>(kx) - rx, static_cast<long>(ky) - ry, kernel.at(kx, ky)});

  const long w = static_cast<long>(frame.width);
  const long h = static_cast<long>(frame.height);
  Frame out(frame.width, frame.height, 0.0);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      double acc = 0.0;
      for (const auto& t : taps) {
        const long sx = std::clamp(x + t.dx, 0L, w - 1);
        const long sy = std::clamp(y + t.dy, 0L, h - 1);
        acc += t.w * frame.pixels[static_cast<std::size_t>(sy * w + sx)];
      }
      out.pixels[static_cast<std::size_t>(y * w + x)] = std::clamp(acc, 0.0, 1.0);
    }
  }
  return out;
}

Frame area_downscale(const Frame& frame, std::size_t width, std::size_t height) {
  require_frame(frame);
  if (width == 0 || height == 0 || width > frame.width || height > frame.height)
    throw ShapeError("area_downscale: target must be non-empty and no larger than the source");
  if (width == frame.width && height == frame.height) return frame;
  const auto wx = area_weights(frame.width, width);
  const auto wy = area_weights(frame.height, height);
  // Horizontal pass then vertical pass.
  Frame tmp(width, frame.height, 0.0);
  for (std::size_t y = 0; y < frame.height; ++y)
    for (std::size_t j = 0; j < width; ++j) {
      double acc = 0.0;
      for (auto [i, wt] : wx[j]) acc += wt * frame.at(i, y);
      tmp.at(j, y) = acc;
    }
  Frame out(width, height, 0.0);
  for (std::size_t k = 0; k < height; ++k)
    for (std::size_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (auto [i, wt] : wy[k]) acc += wt * tmp.at(x, i);
      out.at(x, k) = acc;
    }
  return out;
}

Frame nearest_upscale(const Frame& frame, std::size_t width, std::size_t height) {
  require_frame(frame);
  if (width == frame.width && height == frame.height) return frame;
  Frame out(width, height, 0.0);
  for (std::size_t y = 0; y < height; ++y) {
    const auto sy = std::min(frame.height - 1, (y * frame.height) / height);
    for (std::size_t x = 0; x < width; ++x) {
      const auto sx = std::min(frame.width - 1, (x * frame.width) / width);
      out.at(x, y) = frame.at(sx, sy);
    }
  }
  return out;
}

Frame corrupt(const Frame& frame, const CorruptionSpec& spec, Rng& rng) {
  require_frame(frame);
  spec.validate();
  switch (spec.kind) {
    case Kind::gaussian:
      return add_gaussian(frame, spec.sigma, rng);
    case Kind::impulse:
      return add_impulse(frame, spec.p, rng);
    case Kind::motion_blur: {
      const double angle = rng.uniform(-std::numbers::pi / 4.0, std::numbers::pi / 4.0);
      if (spec.rho == 0) return frame;
      return convolve_replicate(frame, motion_blur_kernel(spec.rho, spec.sigma, angle));
    }
    case Kind::pixelate: {
      const auto w = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(spec.f * static_cast<double>(frame.width))));
      const auto h = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(spec.f * static_cast<double>(frame.height))));
      if (w == frame.width && h == frame.height) return frame;
      return nearest_upscale(area_downscale(frame, w, h), frame.width, frame.height);
    }
  }
  return frame;
}

std::vector<CorruptionSpec> severity_grid(Kind kind) {
  std::vector<CorruptionSpec> grid;
  switch (kind) {
    case Kind::gaussian:
      for (double s : {0.08, 0.12, 0.18, 0.26, 0.38}) grid.push_back(CorruptionSpec::gaussian(s));
      break;
    case Kind::impulse:
      for (double p : {0.03, 0.06, 0.09, 0.17, 0.27}) grid.push_back(CorruptionSpec::impulse(p));
      break;
    case Kind::motion_blur:
      grid = {CorruptionSpec::motion_blur(10, 3), CorruptionSpec::motion_blur(15, 5),
              CorruptionSpec::motion_blur(15, 8), CorruptionSpec::motion_blur(15, 12),
              CorruptionSpec::motion_blur(20, 15)};
      break;
    case Kind::pixelate:
      for (double f : {0.6, 0.5, 0.4, 0.3, 0.25}) grid.push_back(CorruptionSpec::pixelate(f));
      break;
  }
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i].severity = static_cast<int>(i) + 1;
  return grid;
}

CorruptionSpec severity(Kind kind, int level) {
  if (level < 1 || level > 5) throw ConfigError("severity level must lie in 1..5");
  return severity_grid(kind)[static_cast<std::size_t>(level - 1)];
}

}  // namespace oodrl::corruptions
