#pragma once

#include "pdqa/encoder.hpp"
#include "pdqa/prompting.hpp"

namespace pdqa {

// Everything needed to score an image: the frozen backbone, the (possibly
// empty) trainable prompt bank, and the antonym prompt strings.
struct Model {
  ModelConfig config;
  PromptMode mode = PromptMode::kNone;
  HandcraftedPrompts prompts;
  BackboneParams backbone;
  PromptBank bank;

  const PromptBank* bank_ptr() const {
    return mode == PromptMode::kNone ? nullptr : &bank;
  }
};

Model make_model(const ModelConfig& config, std::uint64_t backbone_seed,
                 std::uint64_t bank_seed, PromptMode mode,
                 const HandcraftedPrompts& prompts);

}  // namespace pdqa
