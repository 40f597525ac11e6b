#pragma once

#include <cstdint>
#include <vector>

#include "pdqa/encoder.hpp"
#include "pdqa/image.hpp"
#include "pdqa/prompting.hpp"
#include "pdqa/tensor.hpp"

namespace pdqa {

struct QualityScore {
  double value = 0.0;
};

// A dehazed image prepared for scoring: its cropped patches, its resized
// global view, and (when known) the normalized opinion score.
struct EvalSample {
  std::vector<Image> patches;
  Image global;
  double mos = -1.0;  // negative when absent
};

EvalSample make_eval_sample(const Image& image, const ModelConfig& config,
                            std::size_t n_patches, PatchMode mode,
                            std::uint64_t seed);

// dot(a, b) / (|a| |b|); rejects zero vectors.
double cosine_similarity(const Tensor& a, const Tensor& b);

// Antonym softmax over similarities of unit vectors:
//   exp(sim(t_p, c)) / (exp(sim(t_p, c)) + exp(sim(t_n, c)))
// computed as a stable logistic of the similarity difference; no temperature
// term. Differentiable: stays on the active tape during training.
Tensor patch_score(const Tensor& c, const Tensor& t_p, const Tensor& t_n);

struct ImageQuality {
  double q_hat = 0.0;
  std::vector<double> patch_scores;
};

// Full scoring pipeline: crop n patches and one global resize, encode the
// antonym prompts once, score every (patch, global) pair, average.
ImageQuality predict_image_quality(const Image& image,
                                   const ModelConfig& config,
                                   const BackboneParams& params,
                                   const PromptBank* bank,
                                   const HandcraftedPrompts& prompts,
                                   std::size_t n_patches, PatchMode mode,
                                   std::uint64_t seed = 0);

// Handcrafted prompts, no tuning (the M1 configuration), grid patches.
QualityScore zero_shot_score(const Image& image, const ModelConfig& config,
                             const BackboneParams& params,
                             const HandcraftedPrompts& prompts,
                             std::size_t n_patches);

}  // namespace pdqa
