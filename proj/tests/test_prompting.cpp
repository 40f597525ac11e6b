#include <doctest.h>

#include <stdexcept>

#include "pdqa/prompting.hpp"

using namespace pdqa;

namespace {

ModelConfig default_config() { return ModelConfig{}; }

}  // namespace

TEST_CASE("prompt bank modes gate the trainable set") {
  ModelConfig cfg = default_config();
  PromptBank none = init_prompt_bank(cfg, 1, PromptMode::kNone);
  CHECK(trainable_parameters(none).empty());
  CHECK_FALSE(none.textual_enabled);
  CHECK_FALSE(none.visual_enabled);

  PromptBank both = init_prompt_bank(cfg, 1, PromptMode::kBoth);
  auto params = trainable_parameters(both);
  CHECK(params.size() == 4 * cfg.k_layers);

  PromptBank textual = init_prompt_bank(cfg, 1, PromptMode::kTextualOnly);
  CHECK(trainable_parameters(textual).size() == 2 * cfg.k_layers);
  PromptBank visual = init_prompt_bank(cfg, 1, PromptMode::kVisualOnly);
  CHECK(trainable_parameters(visual).size() == 2 * cfg.k_layers);
}

TEST_CASE("prompt bank shapes and scalar counts") {
  ModelConfig cfg = default_config();  // K=4, M=8, d_prompt=d_model=64
  PromptBank bank = init_prompt_bank(cfg, 5, PromptMode::kBoth);
  std::size_t textual_prompt_scalars = 0;
  for (const Tensor& p : bank.textual_prompts) {
    CHECK(p.rows() == cfg.prompt_len);
    CHECK(p.cols() == cfg.resolved_d_prompt());
    textual_prompt_scalars += p.size();
  }
  CHECK(textual_prompt_scalars == 4 * 8 * 64);
  std::size_t textual_projection_scalars = 0;
  for (const Tensor& f : bank.textual_projections)
    textual_projection_scalars += f.size();
  CHECK(textual_projection_scalars == 4 * (64 * 64 + 64));
}

TEST_CASE("prompt bank initialization is seed deterministic") {
  ModelConfig cfg = default_config();
  PromptBank a = init_prompt_bank(cfg, 17, PromptMode::kBoth);
  PromptBank b = init_prompt_bank(cfg, 17, PromptMode::kBoth);
  auto pa = trainable_parameters(a);
  auto pb = trainable_parameters(b);
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second.values().isApprox(pb[i].second.values(), 0.0));
  }

  // The textual half is identical whether or not the visual half exists.
  PromptBank textual = init_prompt_bank(cfg, 17, PromptMode::kTextualOnly);
  CHECK(textual.textual_prompts[0].values().isApprox(
      a.textual_prompts[0].values(), 0.0));

  PromptBank c = init_prompt_bank(cfg, 18, PromptMode::kBoth);
  CHECK_FALSE(c.textual_prompts[0].values().isApprox(
      a.textual_prompts[0].values(), 0.0));
}

TEST_CASE("trainable ordering is stable across calls") {
  ModelConfig cfg = default_config();
  PromptBank bank = init_prompt_bank(cfg, 2, PromptMode::kBoth);
  auto first = trainable_parameters(bank);
  auto second = trainable_parameters(bank);
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].first == second[i].first);
    CHECK(first[i].second.same_storage(second[i].second));
  }
  // textual prompts, textual projections, visual prompts, visual projections
  CHECK(first[0].first == "prompt.text_prompt0");
  CHECK(first[cfg.k_layers].first == "prompt.text_projection0");
  CHECK(first[2 * cfg.k_layers].first == "prompt.visual_prompt0");
  CHECK(first[3 * cfg.k_layers].first == "prompt.visual_projection0");
}

TEST_CASE("project_prompts applies the affine map") {
  ModelConfig cfg = default_config();
  cfg.k_layers = 1;
  cfg.d_model = 4;
  cfg.d_mlp = 8;
  cfg.n_heads = 1;
  PromptBank bank = init_prompt_bank(cfg, 3, PromptMode::kBoth);

  SUBCASE("exact identity weight, zero bias reproduces raw prompts") {
    Tensor& proj = bank.textual_projections[0];
    proj.values_mut().setZero();
    for (std::size_t i = 0; i < 4; ++i)
      proj.values_mut()[static_cast<Eigen::Index>(i * 4 + i)] = 1.0;
    Tensor out = project_prompts(bank, 0, Branch::kText);
    CHECK(out.values().isApprox(bank.textual_prompts[0].values(), 0.0));
  }

  SUBCASE("zero weight, constant bias gives constant rows") {
    Tensor& proj = bank.visual_projections[0];
    proj.values_mut().setZero();
    for (std::size_t j = 0; j < 4; ++j)
      proj.values_mut()[static_cast<Eigen::Index>(4 * 4 + j)] = 0.5 + j;
    Tensor out = project_prompts(bank, 0, Branch::kVision);
    for (std::size_t r = 0; r < cfg.prompt_len; ++r)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(out.at(r, j) == doctest::Approx(0.5 + j).epsilon(1e-15));
  }
}

TEST_CASE("gradients flow through the projection to raw prompts") {
  ModelConfig cfg = default_config();
  cfg.k_layers = 1;
  cfg.d_model = 6;
  cfg.d_mlp = 8;
  cfg.n_heads = 2;
  cfg.prompt_len = 3;
  PromptBank bank = init_prompt_bank(cfg, 7, PromptMode::kTextualOnly);

  auto forward = [&]() {
    Tensor projected = project_prompts(bank, 0, Branch::kText);
    return sum(mul(projected, projected));
  };
  std::vector<Tensor> leaves = {bank.textual_prompts[0],
                                bank.textual_projections[0]};
  for (Tensor& t : leaves) t.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    backward(forward(), tape);
  }
  auto fd = finite_diff_gradient([&]() { return forward().value(); }, leaves,
                                 1e-5);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    std::vector<double> analytic(leaves[i].grad().data(),
                                 leaves[i].grad().data() + leaves[i].size());
    CHECK(max_relative_error(analytic, fd[i]) < 1e-4);
  }
}

TEST_CASE("project_prompts rejects disabled branches") {
  ModelConfig cfg = default_config();
  PromptBank bank = init_prompt_bank(cfg, 4, PromptMode::kTextualOnly);
  CHECK_THROWS_AS(project_prompts(bank, 0, Branch::kVision),
                  std::invalid_argument);
  CHECK(prompt_mode_from_name("both") == PromptMode::kBoth);
  CHECK_THROWS_AS(prompt_mode_from_name("bogus"), std::invalid_argument);
}
