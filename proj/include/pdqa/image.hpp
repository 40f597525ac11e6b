#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pdqa/rng.hpp"

namespace pdqa {

// RGB image with float pixels in [0,1], row-major, channel-interleaved.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // height * width * 3

  static Image filled(std::size_t width, std::size_t height, double r,
                      double g, double b);

  double& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  double at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }

  void clamp01();
};

enum class PatchMode { kRandom, kGrid };

// n square patches of the given side. Random mode draws seeded uniform
// top-left offsets; grid mode lays the patches on a deterministic grid that
// covers the image as evenly as possible (row-major order, first n cells).
std::vector<Image> crop_patches(const Image& image, std::size_t n,
                                std::size_t side, PatchMode mode,
                                std::uint64_t seed);

// Bilinear resample to side x side, clamped to [0,1].
Image resize_global(const Image& image, std::size_t side);

// Binary 8-bit PPM (P6).
void write_ppm(const Image& image, const std::string& path);
Image read_ppm(const std::string& path);

// Binary 8-bit PGM (P5) from row-major gray values already in [0,255].
void write_pgm(const std::vector<std::uint8_t>& gray, std::size_t width,
               std::size_t height, const std::string& path);

}  // namespace pdqa
