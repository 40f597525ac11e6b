#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pdqa/encoder.hpp"
#include "pdqa/tensor.hpp"

namespace pdqa {

// Maps straight onto the ablation variants: kNone is the zero-shot model
// (handcrafted prompts only), kTextualOnly adds textual prompt tuning, kBoth
// adds visual prompt tuning on top.
enum class PromptMode { kNone, kTextualOnly, kVisualOnly, kBoth };

enum class Branch { kText, kVision };

const char* prompt_mode_name(PromptMode mode);
PromptMode prompt_mode_from_name(const std::string& name);

struct HandcraftedPrompts {
  std::string positive = "Good photo.";
  std::string negative = "Bad photo.";
};

// The complete trainable state. Per enabled branch and per layer: a raw
// prompt matrix (M x d_prompt) and an affine projection into model space,
// packed as one (d_prompt + 1) x d_model tensor whose last row is the bias.
struct PromptBank {
  bool textual_enabled = false;
  bool visual_enabled = false;
  std::vector<Tensor> textual_prompts;
  std::vector<Tensor> textual_projections;
  std::vector<Tensor> visual_prompts;
  std::vector<Tensor> visual_projections;
};

// Prompts start as small seeded noise; projections start near-identity
// (rectangular identity plus std-0.02 noise, zero bias) so projected prompts
// begin close to their raw values.
PromptBank init_prompt_bank(const ModelConfig& config, std::uint64_t seed,
                            PromptMode mode);

// The layer's raw prompts pushed through its projection; `layer` is 0-based
// and feeds the forward pass of transformer layer `layer + 1`.
Tensor project_prompts(const PromptBank& bank, std::size_t layer,
                       Branch branch);

// Deterministic optimizer ordering: textual prompts by layer, textual
// projections, visual prompts, visual projections; disabled branches are
// absent. This is exactly the set Adam updates.
std::vector<std::pair<std::string, Tensor>> trainable_parameters(
    const PromptBank& bank);

}  // namespace pdqa
