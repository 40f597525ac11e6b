#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "pdqa/image.hpp"
#include "pdqa/rng.hpp"

using namespace pdqa;

namespace {

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  Image img;
  img.width = w;
  img.height = h;
  img.pixels.resize(w * h * 3);
  for (double& p : img.pixels) p = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("grid cropping covers the image evenly") {
  Image img = random_image(64, 64, 42);
  auto patches = crop_patches(img, 4, 32, PatchMode::kGrid, 0);
  REQUIRE(patches.size() == 4);
  const std::size_t expected[4][2] = {{0, 0}, {32, 0}, {0, 32}, {32, 32}};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          REQUIRE(patches[i].at(x, y, c) ==
                  img.at(expected[i][0] + x, expected[i][1] + y, c));
  }
}

TEST_CASE("cropping a patch-sized image returns full copies") {
  Image img = random_image(32, 32, 1);
  for (PatchMode mode : {PatchMode::kGrid, PatchMode::kRandom}) {
    auto patches = crop_patches(img, 3, 32, mode, 9);
    REQUIRE(patches.size() == 3);
    for (const Image& p : patches) CHECK(p.pixels == img.pixels);
  }
}

TEST_CASE("crop modes are deterministic and bounded") {
  Image img = random_image(96, 96, 7);
  auto a = crop_patches(img, 5, 32, PatchMode::kRandom, 123);
  auto b = crop_patches(img, 5, 32, PatchMode::kRandom, 123);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].pixels == b[i].pixels);
  auto g1 = crop_patches(img, 6, 32, PatchMode::kGrid, 0);
  auto g2 = crop_patches(img, 6, 32, PatchMode::kGrid, 55);
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK(g1[i].pixels == g2[i].pixels);
}

TEST_CASE("cropping rejects undersized images") {
  Image img = random_image(16, 16, 3);
  CHECK_THROWS_AS(crop_patches(img, 1, 32, PatchMode::kGrid, 0),
                  std::invalid_argument);
}

TEST_CASE("resize to the same size is the identity") {
  Image img = random_image(24, 24, 5);
  Image out = resize_global(img, 24);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(out.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-12));
}

TEST_CASE("resize keeps constant images constant") {
  Image img = Image::filled(20, 20, 0.25, 0.5, 0.75);
  Image out = resize_global(img, 13);
  for (std::size_t y = 0; y < 13; ++y)
    for (std::size_t x = 0; x < 13; ++x) {
      CHECK(out.at(x, y, 0) == doctest::Approx(0.25).epsilon(1e-12));
      CHECK(out.at(x, y, 1) == doctest::Approx(0.5).epsilon(1e-12));
      CHECK(out.at(x, y, 2) == doctest::Approx(0.75).epsilon(1e-12));
    }
}

TEST_CASE("bilinear upscale of a two-pixel ramp") {
  Image img;
  img.width = 2;
  img.height = 1;
  img.pixels = {0, 0, 0, 1, 1, 1};
  Image out = resize_global(img, 4);
  const double expected[4] = {0.0, 0.25, 0.75, 1.0};
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t y = 0; y < 4; ++y)
      CHECK(out.at(x, y, 0) == doctest::Approx(expected[x]).epsilon(1e-12));
  for (std::size_t x = 1; x < 4; ++x)
    CHECK(out.at(x, 0, 0) >= out.at(x - 1, 0, 0));
}

TEST_CASE("ppm round trip matches up to 8-bit quantization") {
  Image img = random_image(9, 7, 11);
  const std::string path =
      (std::filesystem::temp_directory_path() / "pdqa_test_roundtrip.ppm")
          .string();
  write_ppm(img, path);
  Image back = read_ppm(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 0.5 / 255.0 + 1e-12);
  std::remove(path.c_str());
}
