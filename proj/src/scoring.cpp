#include "pdqa/scoring.hpp"

#include <cmath>
#include <stdexcept>

namespace pdqa {

namespace {

void require(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

}  // namespace

EvalSample make_eval_sample(const Image& image, const ModelConfig& cfg,
                            std::size_t n_patches, PatchMode mode,
                            std::uint64_t seed) {
  EvalSample sample;
  sample.patches =
      crop_patches(image, n_patches, cfg.image_side_local, mode, seed);
  sample.global = resize_global(image, cfg.image_side_global);
  return sample;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "cosine_similarity: size mismatch " +
                                    shape_to_string(a.shape()) + " vs " +
                                    shape_to_string(b.shape()));
  const double na = std::sqrt(a.values().square().sum());
  const double nb = std::sqrt(b.values().square().sum());
  require(na > 0.0 && nb > 0.0, "cosine_similarity: zero vector");
  return (a.values() * b.values()).sum() / (na * nb);
}

Tensor patch_score(const Tensor& c, const Tensor& t_p, const Tensor& t_n) {
  return sigmoid(sub(dot(t_p, c), dot(t_n, c)));
}

ImageQuality predict_image_quality(const Image& image, const ModelConfig& cfg,
                                   const BackboneParams& params,
                                   const PromptBank* bank,
                                   const HandcraftedPrompts& prompts,
                                   std::size_t n_patches, PatchMode mode,
                                   std::uint64_t seed) {
  EvalSample sample = make_eval_sample(image, cfg, n_patches, mode, seed);
  // One text encoding per prompt, reused across all patches.
  Tensor t_p = encode_text(prompts.positive, cfg, params, bank);
  Tensor t_n = encode_text(prompts.negative, cfg, params, bank);

  ImageQuality result;
  result.patch_scores.reserve(sample.patches.size());
  double total = 0.0;
  for (const Image& patch : sample.patches) {
    Tensor c = encode_image(patch, sample.global, cfg, params, bank);
    const double score = patch_score(c, t_p, t_n).value();
    result.patch_scores.push_back(score);
    total += score;
  }
  result.q_hat = total / static_cast<double>(sample.patches.size());
  return result;
}

QualityScore zero_shot_score(const Image& image, const ModelConfig& cfg,
                             const BackboneParams& params,
                             const HandcraftedPrompts& prompts,
                             std::size_t n_patches) {
  const ImageQuality q = predict_image_quality(
      image, cfg, params, nullptr, prompts, n_patches, PatchMode::kGrid);
  return QualityScore{q.q_hat};
}

}  // namespace pdqa
