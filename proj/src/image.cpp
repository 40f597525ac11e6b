#include "pdqa/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace pdqa {

namespace {

void require(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

std::uint8_t to_byte(double v) {
  const double scaled = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(scaled);
}

// Evenly spaced offsets covering [0, span] with `count` entries.
std::vector<std::size_t> grid_offsets(std::size_t span, std::size_t count) {
  std::vector<std::size_t> offsets(count, 0);
  if (count > 1) {
    for (std::size_t i = 0; i < count; ++i) {
      const double pos = static_cast<double>(i) * static_cast<double>(span) /
                         static_cast<double>(count - 1);
      offsets[i] = static_cast<std::size_t>(std::llround(pos));
    }
  }
  return offsets;
}

}  // namespace

Image Image::filled(std::size_t width, std::size_t height, double r, double g,
                    double b) {
  Image img;
  img.width = width;
  img.height = height;
  img.pixels.resize(width * height * 3);
  for (std::size_t i = 0; i < width * height; ++i) {
    img.pixels[i * 3 + 0] = r;
    img.pixels[i * 3 + 1] = g;
    img.pixels[i * 3 + 2] = b;
  }
  return img;
}

void Image::clamp01() {
  for (double& p : pixels) p = std::clamp(p, 0.0, 1.0);
}

std::vector<Image> crop_patches(const Image& image, std::size_t n,
                                std::size_t side, PatchMode mode,
                                std::uint64_t seed) {
  require(n >= 1, "crop_patches: need at least one patch");
  require(image.width >= side && image.height >= side,
          "crop_patches: image " + std::to_string(image.width) + "x" +
              std::to_string(image.height) + " smaller than patch side " +
              std::to_string(side));
  const std::size_t max_x = image.width - side;
  const std::size_t max_y = image.height - side;

  std::vector<std::pair<std::size_t, std::size_t>> corners;
  corners.reserve(n);
  if (mode == PatchMode::kRandom) {
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i)
      corners.emplace_back(rng.uniform_index(max_x + 1),
                           rng.uniform_index(max_y + 1));
  } else {
    const auto cols =
        static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    const std::size_t rows = (n + cols - 1) / cols;
    const auto xs = grid_offsets(max_x, cols);
    const auto ys = grid_offsets(max_y, rows);
    for (std::size_t r = 0; r < rows && corners.size() < n; ++r)
      for (std::size_t c = 0; c < cols && corners.size() < n; ++c)
        corners.emplace_back(xs[c], ys[r]);
  }

  std::vector<Image> patches;
  patches.reserve(n);
  for (const auto& [x0, y0] : corners) {
    Image patch;
    patch.width = side;
    patch.height = side;
    patch.pixels.resize(side * side * 3);
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          patch.at(x, y, c) = image.at(x0 + x, y0 + y, c);
    patches.push_back(std::move(patch));
  }
  return patches;
}

Image resize_global(const Image& image, std::size_t side) {
  require(side >= 1, "resize_global: side must be positive");
  Image out;
  out.width = side;
  out.height = side;
  out.pixels.resize(side * side * 3);
  const double sx = static_cast<double>(image.width) / static_cast<double>(side);
  const double sy =
      static_cast<double>(image.height) / static_cast<double>(side);
  for (std::size_t y = 0; y < side; ++y) {
    // Pixel-center convention: output center maps to source coordinates.
    const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    const double cy = std::clamp(fy, 0.0, static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(cy));
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = cy - static_cast<double>(y0);
    for (std::size_t x = 0; x < side; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      const double cx =
          std::clamp(fx, 0.0, static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(cx));
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = cx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1.0 - wx) * image.at(x0, y0, c) +
                           wx * image.at(x1, y0, c);
        const double bottom = (1.0 - wx) * image.at(x0, y1, c) +
                              wx * image.at(x1, y1, c);
        out.at(x, y, c) = std::clamp((1.0 - wy) * top + wy * bottom, 0.0, 1.0);
      }
    }
  }
  return out;
}

void write_ppm(const Image& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<std::uint8_t> bytes;
  bytes.reserve(image.pixels.size());
  for (double p : image.pixels) bytes.push_back(to_byte(p));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write_ppm: write failed for " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6")
    throw std::runtime_error("read_ppm: " + path + " is not binary PPM");
  std::size_t width = 0, height = 0, maxval = 0;
  in >> width >> height >> maxval;
  if (!in || maxval != 255)
    throw std::runtime_error("read_ppm: unsupported header in " + path);
  in.get();  // single whitespace after header
  Image img;
  img.width = width;
  img.height = height;
  img.pixels.resize(width * height * 3);
  std::vector<std::uint8_t> bytes(width * height * 3);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!in) throw std::runtime_error("read_ppm: truncated data in " + path);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.pixels[i] = static_cast<double>(bytes[i]) / 255.0;
  return img;
}

void write_pgm(const std::vector<std::uint8_t>& gray, std::size_t width,
               std::size_t height, const std::string& path) {
  require(gray.size() == width * height, "write_pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()),
            static_cast<std::streamsize>(gray.size()));
  if (!out) throw std::runtime_error("write_pgm: write failed for " + path);
}

}  // namespace pdqa
