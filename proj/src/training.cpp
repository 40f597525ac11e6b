#include "pdqa/training.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pdqa/scoring.hpp"

namespace pdqa {

namespace {

void require(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

}  // namespace

void TrainConfig::validate() const {
  require(learning_rate >= 0.0, "train config: learning_rate must be >= 0");
  require(batch_size >= 1, "train config: batch_size must be >= 1");
  require(train_patches >= 1, "train config: train_patches must be >= 1");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 &&
              adam_beta2 < 1.0,
          "train config: adam betas must lie in [0, 1)");
  require(adam_eps > 0.0, "train config: adam_eps must be positive");
}

AdamState make_adam_state(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto& [name, tensor] : params) {
    state.m.push_back(Eigen::ArrayXd::Zero(tensor.values().size()));
    state.v.push_back(Eigen::ArrayXd::Zero(tensor.values().size()));
  }
  return state;
}

Tensor mse_loss(const Tensor& predicted, const Tensor& target) {
  require(predicted.size() == target.size(),
          "mse_loss: length mismatch " + shape_to_string(predicted.shape()) +
              " vs " + shape_to_string(target.shape()));
  require(predicted.size() > 0, "mse_loss: empty batch");
  Tensor diff = sub(predicted, target);
  return scale(sum(mul(diff, diff)),
               1.0 / static_cast<double>(predicted.size()));
}

void adam_step(const std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, const TrainConfig& cfg) {
  require(state.m.size() == params.size(),
          "adam_step: state does not match parameter list");
  state.t += 1;
  const double bias1 = 1.0 - std::pow(cfg.adam_beta1,
                                      static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(cfg.adam_beta2,
                                      static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, tensor] = params[i];
    require(tensor.has_grad(),
            "adam_step: missing gradient for " + name);
    const Eigen::ArrayXd& g = tensor.grad();
    Eigen::ArrayXd& m = state.m[i];
    Eigen::ArrayXd& v = state.v[i];
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.square();
    const_cast<Tensor&>(tensor).values_mut() -=
        cfg.learning_rate * (m / bias1) / ((v / bias2).sqrt() + cfg.adam_eps);
  }
}

std::vector<TrainRecord> fit(const ModelConfig& cfg,
                             const BackboneParams& params, PromptBank& bank,
                             const HandcraftedPrompts& prompts,
                             const std::vector<LabeledImage>& train_set,
                             const TrainConfig& train_cfg) {
  cfg.validate();
  train_cfg.validate();
  require(!train_set.empty(), "fit: training split is empty");
  for (const LabeledImage& s : train_set)
    require(s.mos >= 0.0 && s.mos <= 1.0,
            "fit: sample " + std::to_string(s.record_index) +
                " has MOS outside [0, 1]");
  auto trainable = trainable_parameters(bank);
  require(!trainable.empty(),
          "fit: no trainable parameters (prompt mode 'none' cannot train)");

  // The global view of each image never changes; resize once.
  std::vector<Image> globals;
  globals.reserve(train_set.size());
  for (const LabeledImage& s : train_set)
    globals.push_back(resize_global(s.image, cfg.image_side_global));

  AdamState state = make_adam_state(trainable);
  std::vector<TrainRecord> records;
  records.reserve(train_cfg.epochs);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(train_cfg.seed, 0x5f0e, epoch));
    shuffle_rng.shuffle(order);

    double loss_weighted = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += train_cfg.batch_size) {
      const std::size_t count =
          std::min(train_cfg.batch_size, order.size() - start);
      Tape tape;
      TapeScope scope(tape);
      // Antonym encodings are shared by the whole batch.
      Tensor t_p = encode_text(prompts.positive, cfg, params, &bank);
      Tensor t_n = encode_text(prompts.negative, cfg, params, &bank);

      std::vector<Tensor> scores;
      std::vector<double> targets;
      scores.reserve(count);
      targets.reserve(count);
      for (std::size_t b = 0; b < count; ++b) {
        const LabeledImage& s = train_set[order[start + b]];
        const std::uint64_t patch_seed =
            mix_seed(train_cfg.seed, 0xc409, epoch, s.record_index);
        const auto patches =
            crop_patches(s.image, train_cfg.train_patches,
                         cfg.image_side_local, PatchMode::kRandom, patch_seed);
        std::vector<Tensor> patch_scores;
        patch_scores.reserve(patches.size());
        for (const Image& patch : patches) {
          Tensor c = encode_image(patch, globals[order[start + b]], cfg,
                                  params, &bank);
          patch_scores.push_back(patch_score(c, t_p, t_n));
        }
        Tensor estimate =
            patch_scores.size() == 1
                ? patch_scores.front()
                : scale(sum(stack_scalars(patch_scores)),
                        1.0 / static_cast<double>(patch_scores.size()));
        scores.push_back(estimate);
        targets.push_back(s.mos);
      }

      Tensor predicted = stack_scalars(scores);
      Tensor target = Tensor::from_values({count}, targets);
      Tensor loss = mse_loss(predicted, target);
      if (!std::isfinite(loss.value()))
        throw std::runtime_error(
            "fit: non-finite loss at epoch " + std::to_string(epoch) +
            ", batch starting at " + std::to_string(start));

      for (auto& [name, tensor] : trainable) tensor.zero_grad();
      backward(loss, tape);
      adam_step(trainable, state, train_cfg);
      loss_weighted += loss.value() * static_cast<double>(count);
    }

    TrainRecord record;
    record.epoch = epoch;
    record.mean_loss = loss_weighted / static_cast<double>(order.size());
    records.push_back(record);
  }
  return records;
}

}  // namespace pdqa
