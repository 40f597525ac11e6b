#include "pdqa/prompting.hpp"

#include <stdexcept>

namespace pdqa {

namespace {

void require(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

// Rectangular identity plus small noise, bias row zero.
Tensor init_projection(std::size_t d_prompt, std::size_t d_model, Rng& rng) {
  Tensor proj = Tensor::randn({d_prompt + 1, d_model}, rng, 0.02, true);
  for (std::size_t i = 0; i < std::min(d_prompt, d_model); ++i)
    proj.values_mut()[static_cast<Eigen::Index>(i * d_model + i)] += 1.0;
  for (std::size_t j = 0; j < d_model; ++j)
    proj.values_mut()[static_cast<Eigen::Index>(d_prompt * d_model + j)] = 0.0;
  return proj;
}

void init_branch(std::vector<Tensor>& prompts, std::vector<Tensor>& projections,
                 const ModelConfig& cfg, Rng rng) {
  const std::size_t m = cfg.prompt_len;
  const std::size_t dp = cfg.resolved_d_prompt();
  for (std::size_t layer = 0; layer < cfg.k_layers; ++layer)
    prompts.push_back(Tensor::randn({m, dp}, rng, 0.02, true));
  for (std::size_t layer = 0; layer < cfg.k_layers; ++layer)
    projections.push_back(init_projection(dp, cfg.d_model, rng));
}

}  // namespace

const char* prompt_mode_name(PromptMode mode) {
  switch (mode) {
    case PromptMode::kNone: return "none";
    case PromptMode::kTextualOnly: return "textual_only";
    case PromptMode::kVisualOnly: return "visual_only";
    case PromptMode::kBoth: return "both";
  }
  return "none";
}

PromptMode prompt_mode_from_name(const std::string& name) {
  if (name == "none") return PromptMode::kNone;
  if (name == "textual_only") return PromptMode::kTextualOnly;
  if (name == "visual_only") return PromptMode::kVisualOnly;
  if (name == "both") return PromptMode::kBoth;
  throw std::invalid_argument("unknown prompt mode '" + name +
                              "' (expected none|textual_only|visual_only|both)");
}

PromptBank init_prompt_bank(const ModelConfig& cfg, std::uint64_t seed,
                            PromptMode mode) {
  cfg.validate();
  PromptBank bank;
  bank.textual_enabled =
      mode == PromptMode::kTextualOnly || mode == PromptMode::kBoth;
  bank.visual_enabled =
      mode == PromptMode::kVisualOnly || mode == PromptMode::kBoth;
  // Branch substreams are independent of the mode, so the textual bank of a
  // textual-only run matches the textual half of a both-branches run.
  if (bank.textual_enabled)
    init_branch(bank.textual_prompts, bank.textual_projections, cfg,
                Rng(mix_seed(seed, 1)));
  if (bank.visual_enabled)
    init_branch(bank.visual_prompts, bank.visual_projections, cfg,
                Rng(mix_seed(seed, 2)));
  return bank;
}

Tensor project_prompts(const PromptBank& bank, std::size_t layer,
                       Branch branch) {
  const bool enabled =
      branch == Branch::kText ? bank.textual_enabled : bank.visual_enabled;
  require(enabled, std::string("project_prompts: ") +
                       (branch == Branch::kText ? "text" : "vision") +
                       " branch is disabled in this bank");
  const auto& prompts =
      branch == Branch::kText ? bank.textual_prompts : bank.visual_prompts;
  const auto& projections = branch == Branch::kText ? bank.textual_projections
                                                    : bank.visual_projections;
  require(layer < prompts.size(),
          "project_prompts: layer " + std::to_string(layer) +
              " out of range for bank of depth " +
              std::to_string(prompts.size()));
  const Tensor& raw = prompts[layer];
  const Tensor& proj = projections[layer];
  const std::size_t dp = raw.cols();
  Tensor weight = slice_rows(proj, 0, dp);
  Tensor bias = slice_rows(proj, dp, 1);
  return add_rowvec(matmul(raw, weight), reshape(bias, {proj.cols()}));
}

std::vector<std::pair<std::string, Tensor>> trainable_parameters(
    const PromptBank& bank) {
  std::vector<std::pair<std::string, Tensor>> out;
  if (bank.textual_enabled) {
    for (std::size_t i = 0; i < bank.textual_prompts.size(); ++i)
      out.emplace_back("prompt.text_prompt" + std::to_string(i),
                       bank.textual_prompts[i]);
    for (std::size_t i = 0; i < bank.textual_projections.size(); ++i)
      out.emplace_back("prompt.text_projection" + std::to_string(i),
                       bank.textual_projections[i]);
  }
  if (bank.visual_enabled) {
    for (std::size_t i = 0; i < bank.visual_prompts.size(); ++i)
      out.emplace_back("prompt.visual_prompt" + std::to_string(i),
                       bank.visual_prompts[i]);
    for (std::size_t i = 0; i < bank.visual_projections.size(); ++i)
      out.emplace_back("prompt.visual_projection" + std::to_string(i),
                       bank.visual_projections[i]);
  }
  return out;
}

}  // namespace pdqa
