#include <doctest.h>

#include <cmath>
#include <numbers>

#include "errors.hpp"
#include "model.hpp"
#include "ops.hpp"
#include "oracles.hpp"
#include "rng.hpp"

using namespace swinchex;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor random_tensor(SplitMix64& rng, Shape shape, double lo = 0.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

void randomize(ParamSet& params, SplitMix64& rng, double scale) {
  for (auto& [path, t] : params)
    for (double& v : t.mutable_data()) v = rng.uniform(-scale, scale);
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.image_size = 8;
  c.patch_size = 2;
  c.embed_dim = 4;
  c.depths = {2};
  c.num_heads = {2};
  c.window = 2;
  return c;
}

}  // namespace

TEST_SUITE("swin-model") {

TEST_CASE("patch embedding flattens row, column, channel") {
  SplitMix64 rng(1);
  const std::size_t p = 2, c = 3;
  const Tensor img = random_tensor(rng, {4, 6, 3});
  const Tensor w = random_tensor(rng, {3 * p * p, c}, -1, 1);
  const Tensor b = random_tensor(rng, {c}, -1, 1);
  const Tensor out = patch_embed(img, w, b, p);
  REQUIRE(out.shape() == Shape{2, 3, c});  // unbatched input keeps rank 3
  for (std::size_t ty = 0; ty < 2; ++ty)
    for (std::size_t tx = 0; tx < 3; ++tx) {
      std::vector<double> flat;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch) flat.push_back(img.data()[((ty * p + y) * 6 + tx * p + x) * 3 + ch]);
      const auto want = oracle::matmul(flat, values(w), 1, flat.size(), c);
      for (std::size_t k = 0; k < c; ++k)
        CHECK(out.data()[(ty * 3 + tx) * c + k] == doctest::Approx(want[k] + b.data()[k]).epsilon(1e-14));
    }

  const Tensor flat_img({8, 8, 3}, 0.4);
  const Tensor tokens = patch_embed(flat_img, random_tensor(rng, {48, c}, -1, 1), b, 4);
  CHECK(tokens.shape() == Shape{2, 2, c});
  for (std::size_t t = 1; t < 4; ++t)
    for (std::size_t k = 0; k < c; ++k) CHECK(tokens.data()[t * c + k] == tokens.data()[k]);

  CHECK(patch_embed(Tensor({224, 224, 3}), Tensor({48, 1}), Tensor({1}), 4).shape() == Shape{56, 56, 1});
}

TEST_CASE("patch merge order and identity-like projection") {
  SplitMix64 rng(2);
  const std::size_t c = 3;
  const Tensor z = random_tensor(rng, {1, 4, 4, c});
  std::vector<double> eye(4 * c * 2 * c, 0.0);
  for (std::size_t i = 0; i < 2 * c; ++i) eye[i * 2 * c + i] = 1.0;
  const Tensor out = patch_merge(z, Tensor({4 * c, 2 * c}, eye));
  REQUIRE(out.shape() == Shape{1, 2, 2, 2 * c});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < c; ++k) {
        CHECK(out.data()[(i * 2 + j) * 2 * c + k] == z.data()[((2 * i) * 4 + 2 * j) * c + k]);
        CHECK(out.data()[(i * 2 + j) * 2 * c + c + k] == z.data()[((2 * i) * 4 + 2 * j + 1) * c + k]);
      }
  CHECK(patch_merge(Tensor({1, 2, 2, 5}), Tensor({20, 10})).shape() == Shape{1, 1, 1, 10});
  CHECK(patch_merge(Tensor({1, 56, 56, 192}), Tensor({768, 384})).shape() == Shape{1, 28, 28, 384});
}

TEST_CASE("block with zero output projections is the identity") {
  SplitMix64 rng(3);
  ModelConfig cfg = tiny_config();
  ParamSet params = make_parameters(cfg);
  randomize(params, rng, 0.5);
  for (const char* name : {"attn.wo", "mlp.fc2.weight", "mlp.fc2.bias"})
    for (double& v : params.at(std::string("stages.0.blocks.1.") + name).mutable_data()) v = 0.0;
  const BlockParams bp = block_params(params, "stages.0.blocks.1.", 2);
  const Tensor z = random_tensor(rng, {1, 4, 4, 4}, -1, 1);
  const Tensor out = swin_block(z, bp, {2, 1, Activation::gelu, 1e-5});
  CHECK(values(out) == values(z));

  const Tensor big = random_tensor(rng, {1, 8, 8, 16}, -1, 1);
  ModelConfig wide = cfg;
  wide.image_size = 16;
  wide.embed_dim = 16;
  wide.window = 4;
  ParamSet wp = make_parameters(wide);
  randomize(wp, rng, 0.3);
  CHECK(swin_block(big, block_params(wp, "stages.0.blocks.0.", 2), {4, 0}).shape() == big.shape());
}

TEST_CASE("block parameters pass the gradient check") {
  SplitMix64 rng(4);
  ModelConfig cfg = tiny_config();
  ParamSet params = make_parameters(cfg);
  randomize(params, rng, 0.5);
  ParamSet block;
  for (auto& [path, t] : params)
    if (path.rfind("stages.0.blocks.1.", 0) == 0) block.add(path, t);
  const BlockParams bp = block_params(params, "stages.0.blocks.1.", 2);
  const Tensor z = random_tensor(rng, {1, 4, 4, 4}, -1, 1);
  const Tensor w = random_tensor(rng, {1, 4, 4, 4}, -1, 1);
  const auto result = grad_check_params(
      [&] { return sum(mul(swin_block(z, bp, {2, 1, Activation::gelu, 1e-5}), w)); }, block, 8, 2);
  CHECK(result.max_error < 1e-4);
}

TEST_CASE("desk and large layouts cascade as expected") {
  ModelConfig desk;
  CHECK(desk.final_resolution() == 2);
  CHECK(desk.final_channels() == 128);
  SwinModel model(desk, 1);
  ForwardTrace trace;
  NoGradGuard no_grad;
  SplitMix64 rng(5);
  const Tensor feats = model.backbone_forward(random_tensor(rng, {3, 32, 32, 3}), &trace);
  CHECK(feats.shape() == Shape{3, 2, 2, 128});
  REQUIRE(trace.stage_outputs.size() == 4);
  for (std::size_t s = 1; s < 4; ++s) {
    CHECK(trace.stage_outputs[s][1] * trace.stage_outputs[s][2] * 4 ==
          trace.stage_outputs[s - 1][1] * trace.stage_outputs[s - 1][2]);
    CHECK(trace.stage_outputs[s][3] == 2 * trace.stage_outputs[s - 1][3]);
  }

  const ModelConfig large = ModelConfig::swin_large();
  CHECK(large.final_resolution() == 7);
  CHECK(large.final_channels() == 1536);
  CHECK(large.stage_resolution(0) * large.stage_resolution(0) == 3136u);
}

TEST_CASE("zeroed residual branches reduce the backbone to embed and merges") {
  ModelConfig cfg;
  SwinModel model(cfg, 6);
  for (auto& [path, t] : model.params())
    if (path.find("attn.wo") != std::string::npos || path.find("mlp.fc2") != std::string::npos)
      for (double& v : t.mutable_data()) v = 0.0;
  SplitMix64 rng(6);
  const Tensor img = random_tensor(rng, {1, 32, 32, 3});
  NoGradGuard no_grad;
  Tensor want = patch_embed(img, model.params().at("patch_embed.weight"), model.params().at("patch_embed.bias"), 2);
  for (std::size_t s = 0; s + 1 < cfg.num_stages(); ++s)
    want = patch_merge(want, model.params().at("stages." + std::to_string(s) + ".merge.weight"));
  CHECK(values(model.backbone_forward(img)) == values(want));
}

TEST_CASE("head parameter counts follow the layer widths") {
  ModelConfig cfg = ModelConfig::swin_large();
  cfg.image_size = 32;  // heads only depend on the final channel count
  cfg.window = 8;
  const ParamSet params = make_parameters(cfg);
  const std::size_t expected = 1536 * 384 + 384 + 384 * 48 + 48 + 48 * 48 + 48 + 48 * 1 + 1;
  for (std::size_t k = 0; k < 14; ++k) CHECK(params.numel_with_prefix(SwinModel::head_prefix(k)) == expected);
  CHECK(expected == 611089u);

  ModelConfig headless;
  headless.head_variant = HeadVariant::headless;
  const ParamSet hp = make_parameters(headless);
  CHECK(hp.at("head.weight").shape() == Shape{128, 14});
  CHECK(hp.numel_with_prefix("heads.") == 0);
}

TEST_CASE("zero final head layers give probability one half") {
  for (HeadVariant variant : {HeadVariant::headless, HeadVariant::mlp1, HeadVariant::mlp2, HeadVariant::mlp3}) {
    ModelConfig cfg;
    cfg.head_variant = variant;
    SwinModel model(cfg, 7);
    const std::size_t last = cfg.resolved_head_widths().size();
    for (auto& [path, t] : model.params()) {
      const bool final_layer = variant == HeadVariant::headless
                                   ? path.rfind("head.", 0) == 0
                                   : path.find(".layers." + std::to_string(last) + ".") != std::string::npos;
      if (final_layer)
        for (double& v : t.mutable_data()) v = 0.0;
    }
    SplitMix64 rng(8);
    NoGradGuard no_grad;
    const Tensor probs = model.forward(random_tensor(rng, {2, 32, 32, 3}));
    REQUIRE(probs.shape() == Shape{2, 14});
    for (double p : probs.data()) CHECK(p == 0.5);
  }
}

TEST_CASE("outputs lie strictly inside the unit interval") {
  // Holds while |logit| < 36; beyond that the double sigmoid rounds to 1.
  ModelConfig cfg;
  cfg.init_std = 0.2;
  SwinModel model(cfg, 9);
  SplitMix64 rng(9);
  NoGradGuard no_grad;
  const Tensor probs = model.forward(random_tensor(rng, {2, 32, 32, 3}));
  for (double p : probs.data()) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("each head only depends on its own parameters") {
  ModelConfig cfg;
  SwinModel model(cfg, 10);
  SplitMix64 rng(10);
  const Tensor img = random_tensor(rng, {2, 32, 32, 3});
  NoGradGuard no_grad;
  const Tensor before = model.logits(img);
  for (auto& [path, t] : model.params())
    if (path.rfind(SwinModel::head_prefix(5), 0) == 0)
      for (double& v : t.mutable_data()) v += rng.uniform(-0.1, 0.1);
  const Tensor after = model.logits(img);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 14; ++k) {
      if (k == 5) CHECK(after.data()[b * 14 + k] != before.data()[b * 14 + k]);
      else CHECK(after.data()[b * 14 + k] == before.data()[b * 14 + k]);
    }
}

TEST_CASE("binary cross-entropy examples") {
  const Tensor half({1, 4}, 0.5);
  CHECK(bce_loss(half, Tensor({1, 4}, std::vector<double>{0, 1, 1, 0})).item() ==
        doctest::Approx(std::numbers::ln2).epsilon(1e-14));
  const Tensor exact({1, 3}, std::vector<double>{0, 1, 0});
  CHECK(bce_loss(exact, exact).item() < 1e-11);
  const double hand = -(std::log(0.9) + std::log(0.8)) / 2.0;
  const Tensor p({1, 2}, std::vector<double>{0.9, 0.2});
  const Tensor y({1, 2}, std::vector<double>{1, 0});
  CHECK(bce_loss(p, y).item() == doctest::Approx(hand).epsilon(1e-14));
  CHECK(hand == doctest::Approx(0.164252).epsilon(1e-6));
  CHECK(bce_loss(p, y).item() == doctest::Approx(oracle::bce({0.9, 0.2}, {1, 0})).epsilon(1e-14));
  CHECK_THROWS_AS(bce_loss(p, Tensor({2, 1})), ShapeError);
}

TEST_CASE("invalid layouts are rejected") {
  ModelConfig cfg;
  cfg.image_size = 30;
  CHECK_THROWS(cfg.validate());
  ModelConfig odd;
  odd.depths = {2, 3, 2, 2};
  CHECK_THROWS(odd.validate());
}

}  // TEST_SUITE
