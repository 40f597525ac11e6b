#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "pdqa/encoder.hpp"
#include "pdqa/prompting.hpp"
#include "pdqa/vocab.hpp"

using namespace pdqa;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.k_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_mlp = 16;
  cfg.patch_pixels = 4;
  cfg.image_side_local = 8;
  cfg.image_side_global = 8;
  cfg.max_text_len = 8;
  cfg.prompt_len = 2;
  return cfg;
}

Image random_image(std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  Image img;
  img.width = side;
  img.height = side;
  img.pixels.resize(side * side * 3);
  for (double& p : img.pixels) p = rng.uniform();
  return img;
}

void zero_layer(TransformerLayerParams& lp) {
  for (Tensor* t : {&lp.ln1_gain, &lp.ln1_bias, &lp.wq, &lp.bq, &lp.wk, &lp.bk,
                    &lp.wv, &lp.bv, &lp.wo, &lp.bo, &lp.ln2_gain, &lp.ln2_bias,
                    &lp.mlp_w1, &lp.mlp_b1, &lp.mlp_w2, &lp.mlp_b2})
    t->values_mut().setZero();
}

}  // namespace

TEST_CASE("tokenizer produces sentinel-framed lowercase ids") {
  ModelConfig cfg = tiny_config();
  const Vocabulary& vocab = Vocabulary::builtin();
  auto ids = tokenize("Good photo.", cfg);
  REQUIRE(ids.size() == cfg.max_text_len);
  CHECK(ids[0] == Vocabulary::kBos);
  CHECK(ids[1] == vocab.id_of("good"));
  CHECK(ids[2] == vocab.id_of("photo"));
  CHECK(ids[3] == vocab.id_of("."));
  CHECK(ids[4] == Vocabulary::kEos);
  for (std::size_t i = 5; i < ids.size(); ++i) CHECK(ids[i] == Vocabulary::kPad);
  CHECK(ids[1] != Vocabulary::kUnk);
  CHECK(ids[2] != Vocabulary::kUnk);

  CHECK(tokenize("Good photo.", cfg) == ids);
  CHECK_THROWS_AS(tokenize("", cfg), std::invalid_argument);

  auto unk = tokenize("qzxv photo", cfg);
  CHECK(unk[1] == Vocabulary::kUnk);
  CHECK(unk[2] == vocab.id_of("photo"));
}

TEST_CASE("builtin vocabulary is deduplicated and sized as documented") {
  const Vocabulary& vocab = Vocabulary::builtin();
  CHECK(vocab.size() >= 900);
  CHECK(vocab.size() <= 1300);
  for (std::size_t id = 0; id < vocab.size(); ++id)
    CHECK(vocab.id_of(vocab.token_of(id)) == id);
}

TEST_CASE("embed_text adds positions onto embedding rows") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 17);

  std::vector<std::size_t> pads(cfg.max_text_len, Vocabulary::kPad);
  TextState s = embed_text(pads, cfg, bp);
  // Subtracting the positional term leaves the same pad row everywhere.
  for (std::size_t r = 0; r < cfg.max_text_len; ++r)
    for (std::size_t c = 0; c < cfg.d_model; ++c)
      CHECK(s.tokens.at(r, c) - bp.text_pos.at(r, c) ==
            doctest::Approx(bp.token_embedding.at(Vocabulary::kPad, c))
                .epsilon(1e-15));

  std::vector<std::size_t> other = pads;
  other[3] = Vocabulary::kUnk;
  TextState s2 = embed_text(other, cfg, bp);
  std::size_t rows_differing = 0;
  for (std::size_t r = 0; r < cfg.max_text_len; ++r) {
    bool differs = false;
    for (std::size_t c = 0; c < cfg.d_model; ++c)
      differs = differs || s.tokens.at(r, c) != s2.tokens.at(r, c);
    rows_differing += differs ? 1 : 0;
  }
  CHECK(rows_differing == 1);

  TextState s3 = embed_text(pads, cfg, bp);
  CHECK(s3.tokens.values().isApprox(s.tokens.values(), 0.0));

  std::vector<std::size_t> bad = pads;
  bad[0] = cfg.resolved_vocab_size();
  CHECK_THROWS_AS(embed_text(bad, cfg, bp), std::invalid_argument);
}

TEST_CASE("zeroed layer weights make the block an identity") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 3);
  zero_layer(bp.text_layers[0]);
  Rng rng(4);
  TextState in{Tensor::randn({5, cfg.d_model}, rng, 1.0)};
  TextState out = text_layer_forward(in, cfg, bp, 1);
  REQUIRE(out.tokens.shape() == in.tokens.shape());
  for (std::size_t i = 0; i < in.tokens.size(); ++i)
    CHECK(out.tokens.at(i) == doctest::Approx(in.tokens.at(i)).epsilon(1e-15));
}

TEST_CASE("text layer preserves shape and respects layer bounds") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 5);
  Rng rng(6);
  TextState in{Tensor::randn({cfg.max_text_len, cfg.d_model}, rng, 1.0)};
  TextState out = text_layer_forward(in, cfg, bp, 2);
  CHECK(out.tokens.shape() == in.tokens.shape());
  CHECK_THROWS_AS(text_layer_forward(in, cfg, bp, 0), std::invalid_argument);
  CHECK_THROWS_AS(text_layer_forward(in, cfg, bp, 3), std::invalid_argument);
}

TEST_CASE("gradient through one text layer matches finite differences") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 8);
  Rng rng(9);
  Tensor prompts = Tensor::randn({2, cfg.d_model}, rng, 0.5, true);
  Tensor base = Tensor::randn({4, cfg.d_model}, rng, 1.0);

  auto forward = [&]() {
    TextState out =
        text_layer_forward_prompted({base}, prompts, cfg, bp, 1);
    return sum(mul(out.tokens, out.tokens));
  };
  prompts.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    backward(forward(), tape);
  }
  auto fd = finite_diff_gradient([&]() { return forward().value(); }, {prompts},
                                 1e-5);
  std::vector<double> analytic(prompts.grad().data(),
                               prompts.grad().data() + prompts.size());
  CHECK(max_relative_error(analytic, fd[0]) < 1e-4);
}

TEST_CASE("prompted text layer discards prompt outputs") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 21);
  Rng rng(22);
  TextState in{Tensor::randn({cfg.max_text_len, cfg.d_model}, rng, 1.0)};

  // M = 0 degenerates to the plain layer bit for bit.
  Tensor no_prompts = Tensor::zeros({0, cfg.d_model});
  TextState plain = text_layer_forward(in, cfg, bp, 1);
  TextState degenerate =
      text_layer_forward_prompted(in, no_prompts, cfg, bp, 1);
  CHECK(degenerate.tokens.values().isApprox(plain.tokens.values(), 0.0));

  for (std::size_t m : {1, 3, 7}) {
    Tensor prompts = Tensor::randn({m, cfg.d_model}, rng, 0.5);
    TextState out = text_layer_forward_prompted(in, prompts, cfg, bp, 1);
    CHECK(out.tokens.rows() == in.tokens.rows());
  }

  Tensor wrong_width = Tensor::randn({2, cfg.d_model + 1}, rng, 0.5);
  CHECK_THROWS_AS(text_layer_forward_prompted(in, wrong_width, cfg, bp, 1),
                  std::invalid_argument);
}

TEST_CASE("prompts participate as keys and values under uniform attention") {
  // One head, d_model 2, query/key weights zeroed: attention is exactly
  // uniform, so the attended value is the mean over rows, and appending a
  // prompt row must change the output.
  ModelConfig cfg = tiny_config();
  cfg.d_model = 2;
  cfg.n_heads = 1;
  cfg.d_mlp = 4;
  BackboneParams bp = init_backbone(cfg, 30);
  bp.text_layers[0].wq.values_mut().setZero();
  bp.text_layers[0].wk.values_mut().setZero();

  Rng rng(31);
  TextState in{Tensor::randn({3, 2}, rng, 1.0)};
  Tensor prompts = Tensor::randn({1, 2}, rng, 2.0);
  TextState plain = text_layer_forward(in, cfg, bp, 1);
  TextState prompted = text_layer_forward_prompted(in, prompts, cfg, bp, 1);
  double diff = 0.0;
  for (std::size_t i = 0; i < plain.tokens.size(); ++i)
    diff = std::max(diff,
                    std::abs(plain.tokens.at(i) - prompted.tokens.at(i)));
  CHECK(diff > 1e-9);
}

TEST_CASE("image embedding token counts and stream identity") {
  ModelConfig cfg = tiny_config();  // 8x8 images, 4px patches -> 4 tokens
  BackboneParams bp = init_backbone(cfg, 40);
  CHECK(cfg.local_tokens() == 4);
  CHECK(cfg.global_tokens() == 4);

  Image black = Image::filled(8, 8, 0, 0, 0);
  VisionState s = embed_image_pair(black, black, cfg, bp);
  CHECK(s.local_tokens.rows() == 4);
  CHECK(s.global_tokens.rows() == 4);
  // Constant image: token rows differ only by their positional term.
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < cfg.d_model; ++c) {
      CHECK(s.local_tokens.at(r, c) - bp.pos_local.at(r, c) ==
            doctest::Approx(0.0).epsilon(1e-15));
      CHECK(s.global_tokens.at(r, c) - bp.pos_global.at(r, c) ==
            doctest::Approx(0.0).epsilon(1e-15));
    }

  Image a = random_image(8, 101);
  Image b = random_image(8, 102);
  VisionState ab = embed_image_pair(a, b, cfg, bp);
  VisionState ba = embed_image_pair(b, a, cfg, bp);
  CHECK_FALSE(ab.local_tokens.values().isApprox(ba.local_tokens.values(), 0.0));

  Image wrong = random_image(12, 103);
  CHECK_THROWS_AS(embed_image_pair(wrong, b, cfg, bp), std::invalid_argument);
}

TEST_CASE("vision layer prompt handling and attention width") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 50);
  Image a = random_image(8, 51);
  Image b = random_image(8, 52);
  VisionState s = embed_image_pair(a, b, cfg, bp);

  Tensor none = Tensor::zeros({0, cfg.d_model});
  VisionState plain = vision_layer_forward(s, cfg, bp, 1);
  VisionState degenerate = vision_layer_forward_prompted(s, none, cfg, bp, 1);
  CHECK(degenerate.class_row.values().isApprox(plain.class_row.values(), 0.0));
  CHECK(degenerate.local_tokens.values().isApprox(plain.local_tokens.values(),
                                                  0.0));
  CHECK(degenerate.global_tokens.values().isApprox(
      plain.global_tokens.values(), 0.0));

  Rng rng(53);
  const std::size_t m = 3;
  Tensor prompts = Tensor::randn({m, cfg.d_model}, rng, 0.5);
  AttentionRecord rec;
  VisionState out =
      vision_layer_forward_prompted(s, prompts, cfg, bp, 1, &rec);
  CHECK(out.class_row.rows() == 1);
  CHECK(out.local_tokens.rows() == cfg.local_tokens());
  CHECK(out.global_tokens.rows() == cfg.global_tokens());
  // Class token attends over itself, both streams, and the prompts.
  CHECK(rec.per_head.front().cols() ==
        1 + cfg.local_tokens() + cfg.global_tokens() + m);
}

TEST_CASE("gradient w.r.t. prompts through one vision layer") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 60);
  Image a = random_image(8, 61);
  Image b = random_image(8, 62);
  Rng rng(63);
  Tensor prompts = Tensor::randn({2, cfg.d_model}, rng, 0.5, true);

  auto forward = [&]() {
    VisionState s = embed_image_pair(a, b, cfg, bp);
    VisionState out = vision_layer_forward_prompted(s, prompts, cfg, bp, 1);
    Tensor joined = concat_rows(
        {out.class_row, out.local_tokens, out.global_tokens});
    return sum(mul(joined, joined));
  };
  prompts.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    backward(forward(), tape);
  }
  auto fd = finite_diff_gradient([&]() { return forward().value(); }, {prompts},
                                 1e-5);
  std::vector<double> analytic(prompts.grad().data(),
                               prompts.grad().data() + prompts.size());
  CHECK(max_relative_error(analytic, fd[0]) < 1e-4);
}

TEST_CASE("encode_text emits deterministic unit vectors") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 70);
  Tensor good = encode_text("Good photo.", cfg, bp);
  Tensor bad = encode_text("Bad photo.", cfg, bp);
  CHECK(std::abs(std::sqrt(good.values().square().sum()) - 1.0) < 1e-12);
  CHECK(std::abs(std::sqrt(bad.values().square().sum()) - 1.0) < 1e-12);
  Tensor again = encode_text("Good photo.", cfg, bp);
  CHECK(good.values().isApprox(again.values(), 0.0));
  CHECK_FALSE(good.values().isApprox(bad.values(), 0.0));
}

TEST_CASE("encode_image emits deterministic unit vectors") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 80);
  Image patch = random_image(8, 81);
  Image global = random_image(8, 82);
  Tensor c = encode_image(patch, global, cfg, bp);
  CHECK(std::abs(std::sqrt(c.values().square().sum()) - 1.0) < 1e-12);
  Tensor c2 = encode_image(patch, global, cfg, bp);
  CHECK(c.values().isApprox(c2.values(), 0.0));

  // Swapping two pixels inside one patch block changes the embedding.
  Image permuted = patch;
  std::swap(permuted.at(0, 0, 0), permuted.at(1, 1, 0));
  Tensor c3 = encode_image(permuted, global, cfg, bp);
  CHECK_FALSE(c.values().isApprox(c3.values(), 0.0));
}

TEST_CASE("attention maps are normalized and segmented") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 90);
  PromptBank bank = init_prompt_bank(cfg, 91, PromptMode::kBoth);
  Image patch = random_image(8, 92);
  Image global = random_image(8, 93);

  AttentionMaps maps =
      attention_maps(patch, global, cfg, bp, &bank, cfg.k_layers);
  REQUIRE(maps.record.per_head.size() == cfg.n_heads);
  const Tensor& avg = maps.record.averaged;
  for (const Tensor& head : maps.record.per_head)
    for (std::size_t r = 0; r < head.rows(); ++r) {
      double total = 0.0;
      for (std::size_t cidx = 0; cidx < head.cols(); ++cidx)
        total += head.at(r, cidx);
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  for (std::size_t r = 0; r < avg.rows(); ++r) {
    double total = 0.0;
    for (std::size_t cidx = 0; cidx < avg.cols(); ++cidx) {
      double mean = 0.0;
      for (const Tensor& head : maps.record.per_head) mean += head.at(r, cidx);
      mean /= static_cast<double>(maps.record.per_head.size());
      CHECK(avg.at(r, cidx) == doctest::Approx(mean).epsilon(1e-12));
      total += avg.at(r, cidx);
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
  CHECK(maps.class_to_local.size() == cfg.local_tokens());
  CHECK(maps.class_to_global.size() == cfg.global_tokens());
  CHECK(maps.local_grid == cfg.local_grid());
  CHECK(maps.global_grid == cfg.global_grid());
}

TEST_CASE("backbone tensors never require gradients") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 100);
  for (const auto& [name, tensor] : bp.named_tensors()) {
    CAPTURE(name);
    CHECK_FALSE(tensor.requires_grad());
  }
}

TEST_CASE("end-to-end prompt gradients match finite differences") {
  ModelConfig cfg = tiny_config();
  BackboneParams bp = init_backbone(cfg, 110);
  PromptBank bank = init_prompt_bank(cfg, 111, PromptMode::kBoth);
  HandcraftedPrompts prompts;
  Image patch = random_image(8, 112);
  Image global = random_image(8, 113);

  auto forward = [&]() {
    Tensor tp = encode_text(prompts.positive, cfg, bp, &bank);
    Tensor tn = encode_text(prompts.negative, cfg, bp, &bank);
    Tensor c = encode_image(patch, global, cfg, bp, &bank);
    Tensor score = sigmoid(sub(dot(tp, c), dot(tn, c)));
    Tensor err = sub(score, Tensor::scalar(0.2));
    return mul(err, err);
  };

  auto named = trainable_parameters(bank);
  std::vector<Tensor> leaves;
  for (auto& [name, tensor] : named) {
    tensor.zero_grad();
    leaves.push_back(tensor);
  }
  Tape tape;
  {
    TapeScope scope(tape);
    backward(forward(), tape);
  }
  auto fd = finite_diff_gradient([&]() { return forward().value(); }, leaves,
                                 1e-4);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    std::vector<double> analytic(leaves[i].grad().data(),
                                 leaves[i].grad().data() + leaves[i].size());
    CAPTURE(named[i].first);
    CHECK(max_relative_error(analytic, fd[i]) < 1e-4);
  }
}
