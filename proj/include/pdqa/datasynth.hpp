#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pdqa/image.hpp"

namespace pdqa {

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t side = 96;
};

// Clean image plus its per-pixel depth profile, depth in (0,1].
struct Scene {
  Image clean;
  std::vector<double> depth;
};

// Atmospheric scattering parameters: I = J*t + A*(1-t), t = exp(-beta*depth).
struct HazeParams {
  std::array<double, 3> atmospheric_light = {0.9, 0.9, 0.9};
  double beta = 1.0;
};

struct ManifestRecord {
  std::string image_path;
  double mos = 0.0;
  std::size_t content_id = 0;
  std::size_t dehazer_id = 0;
  std::string split = "unassigned";  // train | test | unassigned
};

// Procedural content: corner-gradient background, seeded rectangles, smooth
// value-noise texture, and a smooth depth field rescaled into [0.2, 1].
Scene synthesize_scene(const SceneSpec& spec);

Image apply_haze(const Image& clean, const std::vector<double>& depth,
                 const HazeParams& params);

struct DehazeResult {
  Image image;
  double residual_beta = 0.0;    // (1 - quality) * beta
  double artifact_level = 0.0;   // |gain error| + mean |color shift|
};

// Inverts the haze model with a beta estimate of quality*beta, then applies
// quality-dependent artifacts (seeded per-channel color shift and over/
// under-enhancement, strongest for mid-quality dehazers, zero at quality 0
// and 1). quality=1 recovers the clean image; quality=0 returns the hazy
// input untouched.
DehazeResult simulate_dehazer(const Image& hazy,
                              const std::vector<double>& depth,
                              const HazeParams& true_params, double quality,
                              std::uint64_t artifact_seed);

// Analytic opinion-score oracle: exp(-(w1*residual_beta + w2*artifact_level))
// with fixed weights w1 = 1.0, w2 = 2.0; strictly decreasing in both.
double assign_mos(double residual_beta, double artifact_level);

// One haze level per scene, `dehazers_per_scene` simulated dehazers with
// spread quality values. Writes PPM images plus manifest.jsonl under out_dir
// and returns the records (split left "unassigned").
std::vector<ManifestRecord> build_dataset(std::size_t n_scenes,
                                          std::size_t dehazers_per_scene,
                                          const std::string& out_dir,
                                          std::uint64_t seed,
                                          std::size_t image_side = 96);

// Shuffles content ids by (seed, repeat_index) and sends the first
// train_fraction of contents to "train", the rest to "test". No content id
// ever straddles the two.
std::vector<ManifestRecord> split_by_content(std::vector<ManifestRecord> records,
                                             double train_fraction,
                                             std::uint64_t repeat_index,
                                             std::uint64_t seed);

void write_manifest(const std::vector<ManifestRecord>& records,
                    const std::string& path);
std::vector<ManifestRecord> read_manifest(const std::string& path);

}  // namespace pdqa
