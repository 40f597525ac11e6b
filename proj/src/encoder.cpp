#include "pdqa/encoder.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

#include "pdqa/prompting.hpp"
#include "pdqa/vocab.hpp"

namespace pdqa {

namespace {

void require(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

Tensor empty_rows(std::size_t cols) { return Tensor::zeros({0, cols}); }

Tensor randn_frozen(Shape shape, Rng& rng, double stddev) {
  return Tensor::randn(std::move(shape), rng, stddev, false);
}

TransformerLayerParams init_layer(const ModelConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_model;
  TransformerLayerParams lp;
  lp.ln1_gain = Tensor::full({d}, 1.0);
  lp.ln1_bias = Tensor::zeros({d});
  lp.wq = randn_frozen({d, d}, rng, 0.02);
  lp.bq = Tensor::zeros({d});
  lp.wk = randn_frozen({d, d}, rng, 0.02);
  lp.bk = Tensor::zeros({d});
  lp.wv = randn_frozen({d, d}, rng, 0.02);
  lp.bv = Tensor::zeros({d});
  lp.wo = randn_frozen({d, d}, rng, 0.02);
  lp.bo = Tensor::zeros({d});
  lp.ln2_gain = Tensor::full({d}, 1.0);
  lp.ln2_bias = Tensor::zeros({d});
  lp.mlp_w1 = randn_frozen({d, cfg.d_mlp}, rng, 0.02);
  lp.mlp_b1 = Tensor::zeros({cfg.d_mlp});
  lp.mlp_w2 = randn_frozen({cfg.d_mlp, d}, rng, 0.02);
  lp.mlp_b2 = Tensor::zeros({d});
  return lp;
}

void append_layer_tensors(std::vector<std::pair<std::string, Tensor>>& out,
                          const std::string& prefix,
                          const TransformerLayerParams& lp) {
  out.emplace_back(prefix + ".ln1_gain", lp.ln1_gain);
  out.emplace_back(prefix + ".ln1_bias", lp.ln1_bias);
  out.emplace_back(prefix + ".wq", lp.wq);
  out.emplace_back(prefix + ".bq", lp.bq);
  out.emplace_back(prefix + ".wk", lp.wk);
  out.emplace_back(prefix + ".bk", lp.bk);
  out.emplace_back(prefix + ".wv", lp.wv);
  out.emplace_back(prefix + ".bv", lp.bv);
  out.emplace_back(prefix + ".wo", lp.wo);
  out.emplace_back(prefix + ".bo", lp.bo);
  out.emplace_back(prefix + ".ln2_gain", lp.ln2_gain);
  out.emplace_back(prefix + ".ln2_bias", lp.ln2_bias);
  out.emplace_back(prefix + ".mlp_w1", lp.mlp_w1);
  out.emplace_back(prefix + ".mlp_b1", lp.mlp_b1);
  out.emplace_back(prefix + ".mlp_w2", lp.mlp_w2);
  out.emplace_back(prefix + ".mlp_b2", lp.mlp_b2);
}

Tensor transformer_block(const Tensor& x, const TransformerLayerParams& lp,
                         const ModelConfig& cfg, AttentionRecord* capture) {
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor h = layer_norm(x, lp.ln1_gain, lp.ln1_bias, cfg.layer_norm_eps);
  Tensor q = add_rowvec(matmul(h, lp.wq), lp.bq);
  Tensor k = add_rowvec(matmul(h, lp.wk), lp.bk);
  Tensor v = add_rowvec(matmul(h, lp.wv), lp.bv);

  std::vector<Tensor> heads;
  heads.reserve(cfg.n_heads);
  std::vector<Tensor> attn_mats;
  for (std::size_t head = 0; head < cfg.n_heads; ++head) {
    Tensor qh = slice_cols(q, head * dh, dh);
    Tensor kh = slice_cols(k, head * dh, dh);
    Tensor vh = slice_cols(v, head * dh, dh);
    Tensor attn = softmax(scale(matmul_nt(qh, kh), inv_sqrt_dh), 1);
    if (capture) attn_mats.push_back(attn);
    heads.push_back(matmul(attn, vh));
  }
  Tensor merged = cfg.n_heads == 1 ? heads.front() : concat_cols(heads);
  Tensor x1 = add(x, add_rowvec(matmul(merged, lp.wo), lp.bo));

  Tensor h2 = layer_norm(x1, lp.ln2_gain, lp.ln2_bias, cfg.layer_norm_eps);
  Tensor inner = gelu(add_rowvec(matmul(h2, lp.mlp_w1), lp.mlp_b1));
  Tensor out = add(x1, add_rowvec(matmul(inner, lp.mlp_w2), lp.mlp_b2));

  if (capture) {
    capture->per_head = attn_mats;
    Tensor avg = Tensor::zeros(attn_mats.front().shape());
    for (const Tensor& a : attn_mats) avg.values_mut() += a.values();
    avg.values_mut() /= static_cast<double>(attn_mats.size());
    capture->averaged = avg;
  }
  (void)d;
  return out;
}

Tensor image_to_token_matrix(const Image& image, const ModelConfig& cfg,
                             const char* stream) {
  require(image.width == image.height,
          std::string("embed_image_pair: ") + stream + " image must be square");
  const std::size_t side = image.width;
  const std::size_t p = cfg.patch_pixels;
  require(side % p == 0, std::string("embed_image_pair: ") + stream +
                             " side " + std::to_string(side) +
                             " not divisible by patch size " +
                             std::to_string(p));
  const std::size_t grid = side / p;
  Tensor m = Tensor::allocate({grid * grid, 3 * p * p});
  std::size_t row = 0;
  for (std::size_t by = 0; by < grid; ++by) {
    for (std::size_t bx = 0; bx < grid; ++bx, ++row) {
      std::size_t col = 0;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t c = 0; c < 3; ++c, ++col)
            m.values_mut()[static_cast<Eigen::Index>(row * 3 * p * p + col)] =
                image.at(bx * p + x, by * p + y, c);
    }
  }
  return m;
}

Tensor maybe_projected_prompts(const PromptBank* bank, Branch branch,
                               std::size_t layer_index_zero_based) {
  return project_prompts(*bank, layer_index_zero_based, branch);
}

}  // namespace

// ---- ModelConfig -----------------------------------------------------------

std::size_t ModelConfig::resolved_vocab_size() const {
  return vocab_size ? vocab_size : Vocabulary::builtin().size();
}

std::size_t ModelConfig::local_tokens() const {
  return local_grid() * local_grid();
}

std::size_t ModelConfig::global_tokens() const {
  return global_grid() * global_grid();
}

void ModelConfig::validate() const {
  require(k_layers >= 1, "config: k_layers must be at least 1");
  require(d_model >= 1 && n_heads >= 1, "config: d_model and n_heads positive");
  require(d_model % n_heads == 0, "config: d_model " + std::to_string(d_model) +
                                      " not divisible by n_heads " +
                                      std::to_string(n_heads));
  require(patch_pixels >= 1, "config: patch_pixels positive");
  require(image_side_local % patch_pixels == 0,
          "config: image_side_local " + std::to_string(image_side_local) +
              " not divisible by patch_pixels " + std::to_string(patch_pixels));
  require(image_side_global % patch_pixels == 0,
          "config: image_side_global " + std::to_string(image_side_global) +
              " not divisible by patch_pixels " + std::to_string(patch_pixels));
  require(max_text_len >= 3, "config: max_text_len must fit bos/eos and text");
  require(prompt_len >= 1, "config: prompt_len must be at least 1");
  require(layer_norm_eps > 0.0, "config: layer_norm_eps must be positive");
}

// ---- Backbone ---------------------------------------------------------------

BackboneParams init_backbone(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  BackboneParams bp;
  Rng text_rng(mix_seed(seed, 0x7e57));
  Rng vis_rng(mix_seed(seed, 0x715e));

  const std::size_t d = cfg.d_model;
  bp.token_embedding =
      randn_frozen({cfg.resolved_vocab_size(), d}, text_rng, 0.02);
  bp.text_pos = randn_frozen({cfg.max_text_len, d}, text_rng, 0.02);
  for (std::size_t i = 0; i < cfg.k_layers; ++i)
    bp.text_layers.push_back(init_layer(cfg, text_rng));
  bp.text_ln_gain = Tensor::full({d}, 1.0);
  bp.text_ln_bias = Tensor::zeros({d});
  bp.text_projection = randn_frozen({d, d}, text_rng, 0.02);

  bp.patch_projection =
      randn_frozen({3 * cfg.patch_pixels * cfg.patch_pixels, d}, vis_rng, 0.02);
  bp.class_token = randn_frozen({1, d}, vis_rng, 0.02);
  bp.pos_local = randn_frozen({cfg.local_tokens(), d}, vis_rng, 0.02);
  bp.pos_global = randn_frozen({cfg.global_tokens(), d}, vis_rng, 0.02);
  for (std::size_t i = 0; i < cfg.k_layers; ++i)
    bp.vision_layers.push_back(init_layer(cfg, vis_rng));
  bp.vis_ln_gain = Tensor::full({d}, 1.0);
  bp.vis_ln_bias = Tensor::zeros({d});
  bp.vis_projection = randn_frozen({d, d}, vis_rng, 0.02);
  return bp;
}

std::vector<std::pair<std::string, Tensor>> BackboneParams::named_tensors()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("text.token_embedding", token_embedding);
  out.emplace_back("text.pos", text_pos);
  for (std::size_t i = 0; i < text_layers.size(); ++i)
    append_layer_tensors(out, "text.layer" + std::to_string(i),
                         text_layers[i]);
  out.emplace_back("text.ln_final_gain", text_ln_gain);
  out.emplace_back("text.ln_final_bias", text_ln_bias);
  out.emplace_back("text.projection", text_projection);
  out.emplace_back("vision.patch_projection", patch_projection);
  out.emplace_back("vision.class_token", class_token);
  out.emplace_back("vision.pos_local", pos_local);
  out.emplace_back("vision.pos_global", pos_global);
  for (std::size_t i = 0; i < vision_layers.size(); ++i)
    append_layer_tensors(out, "vision.layer" + std::to_string(i),
                         vision_layers[i]);
  out.emplace_back("vision.ln_final_gain", vis_ln_gain);
  out.emplace_back("vision.ln_final_bias", vis_ln_bias);
  out.emplace_back("vision.projection", vis_projection);
  return out;
}

// ---- Tokenizer ----------------------------------------------------------------

std::vector<std::size_t> tokenize(const std::string& text,
                                  const ModelConfig& cfg) {
  require(!text.empty(), "tokenize: text must be non-empty");
  const Vocabulary& vocab = Vocabulary::builtin();

  std::vector<std::string> pieces;
  std::string word;
  auto flush_word = [&]() {
    if (!word.empty()) {
      pieces.push_back(word);
      word.clear();
    }
  };
  for (char raw : text) {
    const auto uc = static_cast<unsigned char>(raw);
    if (std::isalnum(uc)) {
      word.push_back(static_cast<char>(std::tolower(uc)));
    } else if (std::isspace(uc)) {
      flush_word();
    } else {
      flush_word();
      pieces.push_back(std::string(1, raw));
    }
  }
  flush_word();

  std::vector<std::size_t> ids;
  ids.reserve(cfg.max_text_len);
  ids.push_back(Vocabulary::kBos);
  for (const std::string& piece : pieces) {
    if (ids.size() + 1 >= cfg.max_text_len) break;  // room for <eos>
    ids.push_back(vocab.id_of(piece));
  }
  ids.push_back(Vocabulary::kEos);
  ids.resize(cfg.max_text_len, Vocabulary::kPad);
  return ids;
}

// ---- Language branch ------------------------------------------------------------

TextState embed_text(const std::vector<std::size_t>& tokens,
                     const ModelConfig& cfg, const BackboneParams& params) {
  require(tokens.size() == cfg.max_text_len,
          "embed_text: expected " + std::to_string(cfg.max_text_len) +
              " tokens, got " + std::to_string(tokens.size()));
  const std::size_t vocab = cfg.resolved_vocab_size();
  for (std::size_t id : tokens)
    require(id < vocab, "embed_text: token id " + std::to_string(id) +
                            " outside vocabulary of size " +
                            std::to_string(vocab));
  Tensor rows = gather_rows(params.token_embedding, tokens);
  return TextState{add(rows, params.text_pos)};
}

TextState text_layer_forward(const TextState& state, const ModelConfig& cfg,
                             const BackboneParams& params, std::size_t layer) {
  require(layer >= 1 && layer <= cfg.k_layers,
          "text_layer_forward: layer " + std::to_string(layer) +
              " outside 1.." + std::to_string(cfg.k_layers));
  return TextState{transformer_block(state.tokens, params.text_layers[layer - 1],
                                     cfg, nullptr)};
}

TextState text_layer_forward_prompted(const TextState& state,
                                      const Tensor& projected_prompts,
                                      const ModelConfig& cfg,
                                      const BackboneParams& params,
                                      std::size_t layer) {
  require(layer >= 1 && layer <= cfg.k_layers,
          "text_layer_forward_prompted: layer " + std::to_string(layer) +
              " outside 1.." + std::to_string(cfg.k_layers));
  const std::size_t m = projected_prompts.rows();
  if (m == 0) return text_layer_forward(state, cfg, params, layer);
  require(projected_prompts.cols() == cfg.d_model,
          "text_layer_forward_prompted: prompt width " +
              std::to_string(projected_prompts.cols()) + " != d_model " +
              std::to_string(cfg.d_model));
  Tensor input = concat_rows({projected_prompts, state.tokens});
  Tensor out =
      transformer_block(input, params.text_layers[layer - 1], cfg, nullptr);
  return TextState{slice_rows(out, m, state.tokens.rows())};
}

// ---- Vision branch ----------------------------------------------------------------

VisionState embed_image_pair(const Image& patch, const Image& global,
                             const ModelConfig& cfg,
                             const BackboneParams& params) {
  require(patch.width == cfg.image_side_local &&
              patch.height == cfg.image_side_local,
          "embed_image_pair: patch is " + std::to_string(patch.width) + "x" +
              std::to_string(patch.height) + ", expected side " +
              std::to_string(cfg.image_side_local));
  require(global.width == cfg.image_side_global &&
              global.height == cfg.image_side_global,
          "embed_image_pair: global is " + std::to_string(global.width) + "x" +
              std::to_string(global.height) + ", expected side " +
              std::to_string(cfg.image_side_global));
  Tensor local =
      matmul(image_to_token_matrix(patch, cfg, "local"), params.patch_projection);
  Tensor global_tokens = matmul(image_to_token_matrix(global, cfg, "global"),
                                params.patch_projection);
  return VisionState{params.class_token, add(local, params.pos_local),
                     add(global_tokens, params.pos_global)};
}

namespace {

VisionState vision_block(const VisionState& state, const Tensor* prompts,
                         const ModelConfig& cfg, const BackboneParams& params,
                         std::size_t layer, AttentionRecord* capture) {
  require(layer >= 1 && layer <= cfg.k_layers,
          "vision_layer_forward: layer " + std::to_string(layer) +
              " outside 1.." + std::to_string(cfg.k_layers));
  const std::size_t nl = state.local_tokens.rows();
  const std::size_t ng = state.global_tokens.rows();
  std::vector<Tensor> parts = {state.class_row, state.local_tokens};
  if (ng > 0) parts.push_back(state.global_tokens);
  if (prompts) parts.push_back(*prompts);
  Tensor input = concat_rows(parts);
  Tensor out =
      transformer_block(input, params.vision_layers[layer - 1], cfg, capture);
  if (capture) capture->layer = layer;
  VisionState next;
  next.class_row = slice_rows(out, 0, 1);
  next.local_tokens = slice_rows(out, 1, nl);
  next.global_tokens =
      ng > 0 ? slice_rows(out, 1 + nl, ng) : empty_rows(cfg.d_model);
  return next;  // prompt rows, when present, are dropped here
}

}  // namespace

VisionState vision_layer_forward(const VisionState& state,
                                 const ModelConfig& cfg,
                                 const BackboneParams& params,
                                 std::size_t layer, AttentionRecord* capture) {
  return vision_block(state, nullptr, cfg, params, layer, capture);
}

VisionState vision_layer_forward_prompted(const VisionState& state,
                                          const Tensor& projected_prompts,
                                          const ModelConfig& cfg,
                                          const BackboneParams& params,
                                          std::size_t layer,
                                          AttentionRecord* capture) {
  if (projected_prompts.rows() == 0)
    return vision_block(state, nullptr, cfg, params, layer, capture);
  require(projected_prompts.cols() == cfg.d_model,
          "vision_layer_forward_prompted: prompt width " +
              std::to_string(projected_prompts.cols()) + " != d_model " +
              std::to_string(cfg.d_model));
  return vision_block(state, &projected_prompts, cfg, params, layer, capture);
}

// ---- Whole-branch encoders -----------------------------------------------------

Tensor encode_text(const std::string& text, const ModelConfig& cfg,
                   const BackboneParams& params, const PromptBank* bank) {
  const std::vector<std::size_t> tokens = tokenize(text, cfg);
  std::size_t eos_pos = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == Vocabulary::kEos) {
      eos_pos = i;
      break;
    }
  TextState state = embed_text(tokens, cfg, params);
  const bool prompted = bank && bank->textual_enabled;
  for (std::size_t layer = 1; layer <= cfg.k_layers; ++layer) {
    if (prompted) {
      Tensor prompts = maybe_projected_prompts(bank, Branch::kText, layer - 1);
      state = text_layer_forward_prompted(state, prompts, cfg, params, layer);
    } else {
      state = text_layer_forward(state, cfg, params, layer);
    }
  }
  Tensor normed = layer_norm(state.tokens, params.text_ln_gain,
                             params.text_ln_bias, cfg.layer_norm_eps);
  Tensor pooled = slice_rows(normed, eos_pos, 1);
  Tensor projected = matmul(pooled, params.text_projection);
  return l2_normalize(reshape(projected, {cfg.d_model}));
}

Tensor encode_image(const Image& patch, const Image& global,
                    const ModelConfig& cfg, const BackboneParams& params,
                    const PromptBank* bank) {
  VisionState state = embed_image_pair(patch, global, cfg, params);
  if (!cfg.use_global_stream) state.global_tokens = empty_rows(cfg.d_model);
  const bool prompted = bank && bank->visual_enabled;
  for (std::size_t layer = 1; layer <= cfg.k_layers; ++layer) {
    if (prompted) {
      Tensor prompts =
          maybe_projected_prompts(bank, Branch::kVision, layer - 1);
      state = vision_layer_forward_prompted(state, prompts, cfg, params, layer);
    } else {
      state = vision_layer_forward(state, cfg, params, layer);
    }
  }
  Tensor normed = layer_norm(state.class_row, params.vis_ln_gain,
                             params.vis_ln_bias, cfg.layer_norm_eps);
  Tensor projected = matmul(normed, params.vis_projection);
  return l2_normalize(reshape(projected, {cfg.d_model}));
}

AttentionMaps attention_maps(const Image& patch, const Image& global,
                             const ModelConfig& cfg,
                             const BackboneParams& params,
                             const PromptBank* bank, std::size_t layer) {
  require(layer >= 1 && layer <= cfg.k_layers,
          "attention_maps: layer " + std::to_string(layer) + " outside 1.." +
              std::to_string(cfg.k_layers));
  VisionState state = embed_image_pair(patch, global, cfg, params);
  if (!cfg.use_global_stream) state.global_tokens = empty_rows(cfg.d_model);
  const std::size_t nl = state.local_tokens.rows();
  const std::size_t ng = state.global_tokens.rows();
  const bool prompted = bank && bank->visual_enabled;

  AttentionMaps maps;
  for (std::size_t l = 1; l <= layer; ++l) {
    AttentionRecord* capture = l == layer ? &maps.record : nullptr;
    if (prompted) {
      Tensor prompts = maybe_projected_prompts(bank, Branch::kVision, l - 1);
      state = vision_layer_forward_prompted(state, prompts, cfg, params, l,
                                            capture);
    } else {
      state = vision_layer_forward(state, cfg, params, l, capture);
    }
  }

  const Tensor& avg = maps.record.averaged;
  maps.local_grid = cfg.local_grid();
  maps.global_grid = ng > 0 ? cfg.global_grid() : 0;
  maps.class_to_local.resize(nl);
  for (std::size_t i = 0; i < nl; ++i)
    maps.class_to_local[i] = avg.at(0, 1 + i);
  maps.class_to_global.resize(ng);
  for (std::size_t i = 0; i < ng; ++i)
    maps.class_to_global[i] = avg.at(0, 1 + nl + i);
  return maps;
}

}  // namespace pdqa
