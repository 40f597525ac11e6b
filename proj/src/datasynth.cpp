#include "pdqa/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace pdqa {

namespace {

void require(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

// Coarse random grid bilinearly upsampled; smooth field in [0, 1].
std::vector<double> smooth_field(std::size_t side, std::size_t knots,
                                 Rng& rng) {
  std::vector<double> grid(knots * knots);
  for (double& v : grid) v = rng.uniform();
  std::vector<double> field(side * side);
  const double step =
      static_cast<double>(knots - 1) / static_cast<double>(side - 1);
  for (std::size_t y = 0; y < side; ++y) {
    const double gy = static_cast<double>(y) * step;
    const auto y0 = std::min(static_cast<std::size_t>(gy), knots - 2);
    const double wy = gy - static_cast<double>(y0);
    for (std::size_t x = 0; x < side; ++x) {
      const double gx = static_cast<double>(x) * step;
      const auto x0 = std::min(static_cast<std::size_t>(gx), knots - 2);
      const double wx = gx - static_cast<double>(x0);
      const double top = (1 - wx) * grid[y0 * knots + x0] +
                         wx * grid[y0 * knots + x0 + 1];
      const double bot = (1 - wx) * grid[(y0 + 1) * knots + x0] +
                         wx * grid[(y0 + 1) * knots + x0 + 1];
      field[y * side + x] = (1 - wy) * top + wy * bot;
    }
  }
  return field;
}

}  // namespace

Scene synthesize_scene(const SceneSpec& spec) {
  require(spec.side >= 8, "synthesize_scene: side too small");
  Rng rng(mix_seed(spec.seed, 0x5ce2e));
  const std::size_t side = spec.side;

  Scene scene;
  scene.clean.width = side;
  scene.clean.height = side;
  scene.clean.pixels.resize(side * side * 3);

  // Background: bilinear blend of four random corner colors.
  double corners[4][3];
  for (auto& corner : corners)
    for (double& ch : corner) ch = rng.uniform(0.05, 0.95);
  for (std::size_t y = 0; y < side; ++y) {
    const double fy = static_cast<double>(y) / static_cast<double>(side - 1);
    for (std::size_t x = 0; x < side; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(side - 1);
      for (std::size_t c = 0; c < 3; ++c)
        scene.clean.at(x, y, c) = (1 - fy) * ((1 - fx) * corners[0][c] +
                                              fx * corners[1][c]) +
                                  fy * ((1 - fx) * corners[2][c] +
                                        fx * corners[3][c]);
    }
  }

  // A handful of colored rectangles.
  const std::size_t n_rects = 4 + rng.uniform_index(5);
  for (std::size_t r = 0; r < n_rects; ++r) {
    const std::size_t w = side / 8 + rng.uniform_index(side / 3);
    const std::size_t h = side / 8 + rng.uniform_index(side / 3);
    const std::size_t x0 = rng.uniform_index(side - w);
    const std::size_t y0 = rng.uniform_index(side - h);
    double color[3];
    for (double& ch : color) ch = rng.uniform(0.05, 0.95);
    for (std::size_t y = y0; y < y0 + h; ++y)
      for (std::size_t x = x0; x < x0 + w; ++x)
        for (std::size_t c = 0; c < 3; ++c) scene.clean.at(x, y, c) = color[c];
  }

  // Smooth texture plus fine grain.
  const std::vector<double> tex = smooth_field(side, 8, rng);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double bump = 0.08 * (tex[y * side + x] - 0.5);
      for (std::size_t c = 0; c < 3; ++c)
        scene.clean.at(x, y, c) += bump + 0.02 * (rng.uniform() - 0.5);
    }
  scene.clean.clamp01();

  // Depth: random plane ramp plus a smooth field, rescaled to [0.2, 1].
  const std::vector<double> bumps = smooth_field(side, 5, rng);
  const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double dx = std::cos(angle), dy = std::sin(angle);
  scene.depth.resize(side * side);
  double lo = 1e300, hi = -1e300;
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(side - 1);
      const double fy = static_cast<double>(y) / static_cast<double>(side - 1);
      const double v = 0.6 * (fx * dx + fy * dy) + 0.4 * bumps[y * side + x];
      scene.depth[y * side + x] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double span = hi > lo ? hi - lo : 1.0;
  for (double& d : scene.depth) d = 0.2 + 0.8 * (d - lo) / span;
  return scene;
}

Image apply_haze(const Image& clean, const std::vector<double>& depth,
                 const HazeParams& params) {
  require(params.beta >= 0.0, "apply_haze: beta must be nonnegative");
  for (double a : params.atmospheric_light)
    require(a >= 0.0 && a <= 1.0,
            "apply_haze: atmospheric light outside [0, 1]");
  require(depth.size() == clean.width * clean.height,
          "apply_haze: depth size mismatch");
  Image out = clean;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double t = std::exp(-params.beta * depth[i]);
    for (std::size_t c = 0; c < 3; ++c)
      out.pixels[i * 3 + c] = clean.pixels[i * 3 + c] * t +
                              params.atmospheric_light[c] * (1.0 - t);
  }
  return out;
}

DehazeResult simulate_dehazer(const Image& hazy,
                              const std::vector<double>& depth,
                              const HazeParams& true_params, double quality,
                              std::uint64_t artifact_seed) {
  require(quality >= 0.0 && quality <= 1.0,
          "simulate_dehazer: quality outside [0, 1]");
  require(depth.size() == hazy.width * hazy.height,
          "simulate_dehazer: depth size mismatch");
  DehazeResult result;
  result.residual_beta = (1.0 - quality) * true_params.beta;

  const double beta_est = quality * true_params.beta;
  result.image = hazy;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double t_est = std::exp(-beta_est * depth[i]);
    for (std::size_t c = 0; c < 3; ++c)
      result.image.pixels[i * 3 + c] =
          (hazy.pixels[i * 3 + c] -
           true_params.atmospheric_light[c] * (1.0 - t_est)) /
          t_est;
  }

  // Mid-quality dehazers distort the most; a null dehazer changes nothing
  // and a perfect one has nothing left to distort.
  const double strength = 4.0 * quality * (1.0 - quality);
  Rng rng(mix_seed(artifact_seed, 0xa27));
  const double gain = 1.0 + 0.12 * strength * (2.0 * rng.uniform() - 1.0);
  double shift[3];
  double shift_mean = 0.0;
  for (double& s : shift) {
    s = 0.05 * strength * (2.0 * rng.uniform() - 1.0);
    shift_mean += std::abs(s) / 3.0;
  }
  for (std::size_t i = 0; i < depth.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c)
      result.image.pixels[i * 3 + c] =
          result.image.pixels[i * 3 + c] * gain + shift[c];
  result.image.clamp01();
  result.artifact_level = std::abs(gain - 1.0) + shift_mean;
  return result;
}

double assign_mos(double residual_beta, double artifact_level) {
  require(residual_beta >= 0.0 && artifact_level >= 0.0,
          "assign_mos: inputs must be nonnegative");
  constexpr double kHazeWeight = 1.0;
  constexpr double kArtifactWeight = 2.0;
  return std::exp(-(kHazeWeight * residual_beta +
                    kArtifactWeight * artifact_level));
}

std::vector<ManifestRecord> build_dataset(std::size_t n_scenes,
                                          std::size_t dehazers_per_scene,
                                          const std::string& out_dir,
                                          std::uint64_t seed,
                                          std::size_t image_side) {
  require(n_scenes >= 2, "build_dataset: need at least 2 scenes");
  require(dehazers_per_scene >= 1, "build_dataset: need at least 1 dehazer");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    throw std::runtime_error("build_dataset: cannot create " + out_dir + ": " +
                             ec.message());

  std::vector<ManifestRecord> records;
  records.reserve(n_scenes * dehazers_per_scene);
  for (std::size_t s = 0; s < n_scenes; ++s) {
    const Scene scene = synthesize_scene({mix_seed(seed, 0x5ce, s), image_side});
    Rng scene_rng(mix_seed(seed, 0xbe7a, s));
    HazeParams haze;
    haze.beta = scene_rng.uniform(0.6, 1.8);
    for (double& a : haze.atmospheric_light) a = scene_rng.uniform(0.75, 0.95);
    const Image hazy = apply_haze(scene.clean, scene.depth, haze);

    for (std::size_t k = 0; k < dehazers_per_scene; ++k) {
      double quality;
      if (dehazers_per_scene == 1) {
        quality = scene_rng.uniform();
      } else {
        const double jitter = scene_rng.uniform(-0.45, 0.45);
        quality = std::clamp(
            (static_cast<double>(k) + jitter) /
                static_cast<double>(dehazers_per_scene - 1),
            0.0, 1.0);
      }
      const DehazeResult dehazed = simulate_dehazer(
          hazy, scene.depth, haze, quality, mix_seed(seed, 0xa2f, s, k));

      ManifestRecord record;
      record.image_path = "scene" + std::to_string(s) + "_dehazer" +
                          std::to_string(k) + ".ppm";
      record.mos = assign_mos(dehazed.residual_beta, dehazed.artifact_level);
      record.content_id = s;
      record.dehazer_id = k;
      write_ppm(dehazed.image,
                (std::filesystem::path(out_dir) / record.image_path).string());
      records.push_back(std::move(record));
    }
  }
  write_manifest(records,
                 (std::filesystem::path(out_dir) / "manifest.jsonl").string());
  return records;
}

std::vector<ManifestRecord> split_by_content(std::vector<ManifestRecord> records,
                                             double train_fraction,
                                             std::uint64_t repeat_index,
                                             std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0,
          "split_by_content: train_fraction must lie in (0, 1)");
  std::set<std::size_t> contents;
  for (const ManifestRecord& r : records) contents.insert(r.content_id);
  require(contents.size() >= 2,
          "split_by_content: need at least 2 distinct content ids, got " +
              std::to_string(contents.size()));

  std::vector<std::size_t> order(contents.begin(), contents.end());
  Rng rng(mix_seed(seed, 0x59117, repeat_index));
  rng.shuffle(order);

  const auto n_train = static_cast<std::size_t>(std::clamp<double>(
      std::floor(train_fraction * static_cast<double>(order.size())), 1.0,
      static_cast<double>(order.size() - 1)));
  std::set<std::size_t> train_contents(order.begin(),
                                       order.begin() +
                                           static_cast<std::ptrdiff_t>(n_train));
  for (ManifestRecord& r : records)
    r.split = train_contents.contains(r.content_id) ? "train" : "test";
  return records;
}

void write_manifest(const std::vector<ManifestRecord>& records,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
  for (const ManifestRecord& r : records) {
    nlohmann::json line = {
        {"image_path", r.image_path}, {"mos", r.mos},
        {"content_id", r.content_id}, {"dehazer_id", r.dehazer_id},
        {"split", r.split},
    };
    out << line.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write_manifest: write failed: " + path);
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_manifest: cannot open " + path);
  std::vector<ManifestRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error("read_manifest: bad JSON at " + path + ":" +
                               std::to_string(line_no));
    ManifestRecord r;
    r.image_path = j.at("image_path").get<std::string>();
    r.mos = j.at("mos").get<double>();
    r.content_id = j.at("content_id").get<std::size_t>();
    r.dehazer_id = j.at("dehazer_id").get<std::size_t>();
    r.split = j.value("split", "unassigned");
    if (r.mos < 0.0 || r.mos > 1.0)
      throw std::runtime_error("read_manifest: MOS outside [0, 1] at " + path +
                               ":" + std::to_string(line_no));
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace pdqa
