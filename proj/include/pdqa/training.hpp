#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pdqa/encoder.hpp"
#include "pdqa/image.hpp"
#include "pdqa/prompting.hpp"
#include "pdqa/tensor.hpp"

namespace pdqa {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  // Random patches drawn per image per step; their scores are averaged into
  // the image's training-time estimate.
  std::size_t train_patches = 1;

  void validate() const;
};

struct AdamState {
  std::vector<Eigen::ArrayXd> m;
  std::vector<Eigen::ArrayXd> v;
  std::uint64_t t = 0;
};

AdamState make_adam_state(
    const std::vector<std::pair<std::string, Tensor>>& params);

struct TrainRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> val_srcc;
};

// An image bound to its normalized opinion score. record_index keys the
// per-(epoch, sample) patch stream; content_id drives content-wise splits.
struct LabeledImage {
  Image image;
  double mos = 0.0;
  std::size_t content_id = 0;
  std::size_t record_index = 0;
};

// (1/B) * sum_j (predicted_j - target_j)^2, differentiable w.r.t. the
// predictions.
Tensor mse_loss(const Tensor& predicted, const Tensor& target);

// One bias-corrected Adam update over the ordered trainable set. Every
// parameter must carry a gradient.
void adam_step(const std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, const TrainConfig& config);

// The epoch loop: seeded shuffle, batches of B, one fresh random patch per
// image per step, MSE on the batch, backprop into the prompt bank only.
// Aborts on a non-finite loss. The backbone is never touched.
std::vector<TrainRecord> fit(const ModelConfig& config,
                             const BackboneParams& params, PromptBank& bank,
                             const HandcraftedPrompts& prompts,
                             const std::vector<LabeledImage>& train_set,
                             const TrainConfig& train_config);

}  // namespace pdqa
