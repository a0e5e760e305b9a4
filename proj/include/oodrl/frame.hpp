#pragma once

#include <cstddef>
#include <vector>

namespace oodrl {

// Grayscale image, row-major, intensities in [0, 1].
struct Frame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  Frame() = default;
  Frame(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool operator==(const Frame&) const = default;
};

}  // namespace oodrl
