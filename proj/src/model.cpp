#include "pdqa/model.hpp"

namespace pdqa {

Model make_model(const ModelConfig& config, std::uint64_t backbone_seed,
                 std::uint64_t bank_seed, PromptMode mode,
                 const HandcraftedPrompts& prompts) {
  Model model;
  model.config = config;
  model.mode = mode;
  model.prompts = prompts;
  model.backbone = init_backbone(config, backbone_seed);
  model.bank = init_prompt_bank(config, bank_seed, mode);
  return model;
}

}  // namespace pdqa
