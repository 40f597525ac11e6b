#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pdqa/image.hpp"
#include "pdqa/tensor.hpp"

namespace pdqa {

struct PromptBank;  // prompting.hpp

struct ModelConfig {
  std::size_t k_layers = 4;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_mlp = 128;
  std::size_t patch_pixels = 8;
  std::size_t image_side_local = 32;
  std::size_t image_side_global = 64;
  std::size_t vocab_size = 0;   // 0 resolves to the builtin vocabulary size
  std::size_t max_text_len = 16;
  std::size_t prompt_len = 8;   // learnable prompts per layer (M)
  std::size_t d_prompt = 0;     // raw prompt width; 0 resolves to d_model
  bool use_global_stream = true;
  double layer_norm_eps = 1e-5;

  std::size_t resolved_vocab_size() const;
  std::size_t resolved_d_prompt() const { return d_prompt ? d_prompt : d_model; }
  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t local_tokens() const;
  std::size_t global_tokens() const;
  std::size_t local_grid() const { return image_side_local / patch_pixels; }
  std::size_t global_grid() const { return image_side_global / patch_pixels; }

  void validate() const;
};

// One pre-norm transformer block: x + attn(ln(x)), then + mlp(ln(.)).
struct TransformerLayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Frozen dual-branch backbone. No tensor here ever requires gradients; a
// training run must leave every byte untouched.
struct BackboneParams {
  // language branch
  Tensor token_embedding;  // vocab x d_model
  Tensor text_pos;         // max_text_len x d_model
  std::vector<TransformerLayerParams> text_layers;
  Tensor text_ln_gain, text_ln_bias;
  Tensor text_projection;  // d_model x d_model
  // vision branch
  Tensor patch_projection;  // 3*patch_pixels^2 x d_model
  Tensor class_token;       // 1 x d_model
  Tensor pos_local;         // local_tokens x d_model
  Tensor pos_global;        // global_tokens x d_model
  std::vector<TransformerLayerParams> vision_layers;
  Tensor vis_ln_gain, vis_ln_bias;
  Tensor vis_projection;  // d_model x d_model

  // Stable (name, tensor) enumeration used by checkpoints and the freeze
  // check.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

BackboneParams init_backbone(const ModelConfig& config, std::uint64_t seed);

// Token matrix W_i flowing through the language branch.
struct TextState {
  Tensor tokens;  // rows x d_model
};

// Class token plus the two vision token streams. The global stream may be
// empty (zero rows) when the global input is disabled.
struct VisionState {
  Tensor class_row;     // 1 x d_model
  Tensor local_tokens;  // local_tokens x d_model
  Tensor global_tokens;
};

struct AttentionRecord {
  std::size_t layer = 0;
  std::vector<Tensor> per_head;  // each queries x keys, rows sum to 1
  Tensor averaged;               // arithmetic mean over heads
};

// ---- Language branch -----------------------------------------------------

// Deterministic ids from the builtin vocabulary, lowercased, punctuation
// split off, padded/truncated to max_text_len with <bos>/<eos> sentinels.
std::vector<std::size_t> tokenize(const std::string& text,
                                  const ModelConfig& config);

TextState embed_text(const std::vector<std::size_t>& tokens,
                     const ModelConfig& config, const BackboneParams& params);

// layer is 1-based (1..K).
TextState text_layer_forward(const TextState& state, const ModelConfig& config,
                             const BackboneParams& params, std::size_t layer);

// Prepends the projected prompts to the block input and discards their rows
// from the block output; the returned token matrix keeps its row count.
TextState text_layer_forward_prompted(const TextState& state,
                                      const Tensor& projected_prompts,
                                      const ModelConfig& config,
                                      const BackboneParams& params,
                                      std::size_t layer);

// ---- Vision branch ---------------------------------------------------------

VisionState embed_image_pair(const Image& patch, const Image& global,
                             const ModelConfig& config,
                             const BackboneParams& params);

VisionState vision_layer_forward(const VisionState& state,
                                 const ModelConfig& config,
                                 const BackboneParams& params,
                                 std::size_t layer,
                                 AttentionRecord* capture = nullptr);

// Appends prompt rows after the token streams and discards their outputs.
VisionState vision_layer_forward_prompted(const VisionState& state,
                                          const Tensor& projected_prompts,
                                          const ModelConfig& config,
                                          const BackboneParams& params,
                                          std::size_t layer,
                                          AttentionRecord* capture = nullptr);

// ---- Whole-branch encoders --------------------------------------------------

// Unit-norm text representation pooled at the <eos> position. The prompt
// bank, when given and enabled, drives the layerwise prompted path.
Tensor encode_text(const std::string& text, const ModelConfig& config,
                   const BackboneParams& params,
                   const PromptBank* bank = nullptr);

// Unit-norm visual representation from the final class token over the joint
// patch + resized-global input.
Tensor encode_image(const Image& patch, const Image& global,
                    const ModelConfig& config, const BackboneParams& params,
                    const PromptBank* bank = nullptr);

struct AttentionMaps {
  AttentionRecord record;
  // Head-averaged attention from the class token onto each stream, in
  // row-major grid order.
  std::vector<double> class_to_local;
  std::vector<double> class_to_global;
  std::size_t local_grid = 0;
  std::size_t global_grid = 0;
};

AttentionMaps attention_maps(const Image& patch, const Image& global,
                             const ModelConfig& config,
                             const BackboneParams& params,
                             const PromptBank* bank, std::size_t layer);

}  // namespace pdqa
