#include <gtest/gtest.h>

#include "darkdeblur/errors.hpp"
#include "darkdeblur/model.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace darkdeblur;

namespace {

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.feature_levels = {8, 12, 16, 20};
  cfg.gate_widths = {8, 12, 16};
  cfg.dense_growth = 4;
  cfg.dense_layers = 2;
  cfg.attention_reduction = 4;
  return cfg;
}

void zero_biases(torch::nn::Module& m) {
  torch::NoGradGuard g;
  for (auto& p : m.named_parameters()) {
    if (p.key().ends_with("bias")) p.value().zero_();
  }
}

void randomise(torch::nn::Module& m, std::uint64_t seed, double scale = 0.3) {
  torch::manual_seed(seed);
  torch::NoGradGuard g;
  for (auto& p : m.parameters()) p.copy_(torch::randn_like(p) * scale);
}

}  // namespace

TEST(GeneratorConfig, Validation) {
  EXPECT_NO_THROW(GeneratorConfig{}.validate());
  GeneratorConfig cfg;
  cfg.feature_levels = {64, 128, 192};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.feature_levels = {64, 64, 192, 256};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gate_widths = {64, 128, 256};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.dense_growth = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(DenseBlock, ShapeAndChannelMismatch) {
  DenseBlock block(64, 5, 32, 0.2);
  EXPECT_EQ(block->convs->size(), 5u);
  const auto y = block->forward(torch::rand({1, 64, 32, 32}));
  EXPECT_EQ(y.sizes(), torch::IntArrayRef({1, 64, 32, 32}));
  EXPECT_THROW(block->forward(torch::rand({1, 32, 8, 8})), ConfigError);
}

TEST(DenseBlock, ZeroInputZeroBiasGivesZero) {
  DenseBlock block(8, 5, 4, 0.2);
  zero_biases(*block);
  EXPECT_EQ(block->forward(torch::zeros({1, 8, 6, 6})).abs().max().item<float>(), 0.0f);
}

TEST(DenseBlock, MatchesLoopOracle) {
  for (std::int64_t width : {4, 8}) {
    DenseBlock block(width, 2, 3, 0.2);
    randomise(*block, 3);
    block->to(torch::kDouble);
    const auto x = torch::randn({1, width, 4, 4}, torch::kDouble);
    EXPECT_LT(oracle::max_abs_diff(oracle::dense_block(oracle::from_tensor(x), block),
                                   block->forward(x)),
              1e-6);
  }
}

TEST(ChannelAttention, MatchesLoopOracleAndRange) {
  ChannelAttention att(4, 2);
  randomise(*att, 5);
  att->to(torch::kDouble);
  const auto x = torch::randn({1, 4, 2, 2}, torch::kDouble);
  EXPECT_LT(oracle::max_abs_diff(oracle::channel_attention(oracle::from_tensor(x), att),
                                 att->forward(x)),
            1e-6);
  const auto s = att->scales(torch::randn({3, 4, 5, 5}, torch::kDouble) * 50);
  EXPECT_EQ(s.sizes(), torch::IntArrayRef({3, 4, 1, 1}));
  EXPECT_GT(s.min().item<double>(), 0.0);
  EXPECT_LT(s.max().item<double>(), 1.0);
}

TEST(ChannelAttention, ZeroWeightsHalveTheInput) {
  ChannelAttention att(8, 4);
  {
    torch::NoGradGuard g;
    for (auto& p : att->parameters()) p.zero_();
  }
  const auto x = torch::randn({2, 8, 3, 3});
  EXPECT_TRUE(torch::allclose(att->forward(x), 0.5 * x));
}

TEST(ChannelAttention, PoolsConstantChannelsExactly) {
  ChannelAttention att(2, 2);
  {
    torch::NoGradGuard g;
    for (auto& p : att->parameters()) p.zero_();
    att->squeeze->weight.fill_(1.0);  // hidden = z0 + z1
  }
  auto x = torch::ones({1, 2, 4, 4});
  x.index_put_({0, 1}, 3.0);
  // Only the descriptor matters here: the hidden unit sees 1 + 3.
  const auto z = x.mean({2, 3});
  EXPECT_EQ(z[0][0].item<float>(), 1.0f);
  EXPECT_EQ(z[0][1].item<float>(), 3.0f);
  EXPECT_FLOAT_EQ(att->squeeze->forward(z.view({1, 2, 1, 1})).item<float>(), 4.0f);
}

TEST(DenseAttentionBlock, IsSumOfTheTwoOracledBranches) {
  GeneratorConfig cfg = small_config();
  DenseAttentionBlock block(8, cfg);
  randomise(*block, 7);
  block->to(torch::kDouble);
  const auto x = torch::randn({1, 8, 4, 4}, torch::kDouble);
  auto in = oracle::from_tensor(x);
  auto dense = oracle::dense_block(in, block->dense);
  const auto att = oracle::channel_attention(in, block->attention);
  for (std::size_t i = 0; i < dense.v.size(); ++i) dense.v[i] += att.v[i];
  EXPECT_LT(oracle::max_abs_diff(dense, block->forward(x)), 1e-6);
}

TEST(DenseAttentionBlock, ZeroInputGivesZero) {
  DenseAttentionBlock block(16, small_config());
  zero_biases(*block);
  // Attention biases are zero too, so the gate is 0.5 * 0.
  EXPECT_EQ(block->forward(torch::zeros({1, 16, 4, 4})).abs().max().item<float>(), 0.0f);
}

TEST(DenseAttentionBlock, FiniteDifferenceGradients) {
  GeneratorConfig cfg = small_config();
  cfg.dense_layers = 5;
  DenseAttentionBlock block(8, cfg);
  randomise(*block, 11, 0.2);
  block->to(torch::kDouble);
  const auto x = torch::randn({1, 8, 4, 4}, torch::kDouble).requires_grad_(true);
  const auto probe = torch::randn({1, 8, 4, 4}, torch::kDouble);
  auto f = [&](const torch::Tensor& in) { return (block->forward(in) * probe).sum(); };

  f(x).backward();
  const auto analytic = x.grad().clone();
  auto numeric = torch::zeros_like(analytic);
  const double h = 1e-6;
  {
    torch::NoGradGuard g;
    auto flat = x.detach().clone().view(-1);
    for (std::int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = f(flat.view_as(x)).item<double>();
      flat[i] = orig - h;
      const double down = f(flat.view_as(x)).item<double>();
      flat[i] = orig;
      numeric.view(-1)[i] = (up - down) / (2 * h);
    }
  }
  const double rel = (analytic - numeric).norm().item<double>() /
                     std::max(analytic.norm().item<double>(), numeric.norm().item<double>());
  EXPECT_LT(rel, 1e-5);
}

TEST(ContextualGate, MatchesLoopOracleAndZeroInput) {
  ContextualGate gate(4, 5, 0.2);
  randomise(*gate, 13);
  gate->to(torch::kDouble);
  const auto x = torch::randn({1, 4, 3, 3}, torch::kDouble);
  const auto y = gate->forward(x);
  EXPECT_EQ(y.size(1), 5);
  EXPECT_LT(oracle::max_abs_diff(oracle::contextual_gate(oracle::from_tensor(x), gate), y), 1e-6);

  ContextualGate level0(64, 64, 0.2);
  zero_biases(*level0);
  const auto z = level0->forward(torch::zeros({1, 64, 4, 4}));
  EXPECT_EQ(z.size(1), 64);
  EXPECT_EQ(z.abs().max().item<float>(), 0.0f);
}

TEST(Transitions, DownsampleShapes) {
  Downsample d(64, 128);
  EXPECT_EQ(d->forward(torch::rand({1, 64, 32, 32})).sizes(), torch::IntArrayRef({1, 128, 16, 16}));
  EXPECT_EQ(d->forward(torch::rand({1, 64, 33, 33})).sizes(), torch::IntArrayRef({1, 128, 17, 17}));
}

TEST(Transitions, UpsampleShapesAndDepthToSpace) {
  Upsample u(128, 64);
  EXPECT_EQ(u->forward(torch::rand({1, 128, 8, 8})).sizes(), torch::IntArrayRef({1, 64, 16, 16}));
  const auto v = torch::tensor({1.0f, 2.0f, 3.0f, 4.0f}).view({1, 4, 1, 1});
  const auto s = u->shuffle->forward(v);
  EXPECT_TRUE(torch::equal(s, torch::tensor({1.0f, 2.0f, 3.0f, 4.0f}).view({1, 1, 2, 2})));
}

TEST(Generator, ResidualIdentityAtInit) {
  Generator g(small_config());
  g->eval();
  torch::NoGradGuard ng;
  for (int i = 0; i < 4; ++i) {
    const auto x = torch::rand({1, 3, 16, 24});
    EXPECT_TRUE(torch::equal(g->forward(x), x));
  }
}

TEST(Generator, ShapeContractAndErrors) {
  Generator g(small_config());
  randomise(*g, 17, 0.1);
  g->eval();
  torch::NoGradGuard ng;
  EXPECT_THROW(g->forward(torch::rand({1, 3, 20, 16})), InputError);
  EXPECT_THROW(g->forward(torch::rand({1, 4, 16, 16})), InputError);
  for (auto [h, w] : {std::pair{17, 31}, std::pair{8, 40}, std::pair{5, 3}, std::pair{1, 1}}) {
    const auto y = g->forward_padded(torch::rand({1, 3, h, w}));
    EXPECT_EQ(y.size(2), h);
    EXPECT_EQ(y.size(3), w);
    EXPECT_GE(y.min().item<float>(), 0.0f);
    EXPECT_LE(y.max().item<float>(), 1.0f);
    EXPECT_TRUE(torch::isfinite(y).all().item<bool>());
  }
}

TEST(Generator, DeblurHandlesImagesAndRejectsGrey) {
  Generator g(small_config());
  const auto img = testsupport::random_image(3, 19, 23, 1);
  EXPECT_EQ(deblur(g, img), img);
  EXPECT_THROW(deblur(g, Image(1, 16, 16)), InputError);
}

TEST(Generator, EveryParameterReceivesGradientOnceTailIsLive) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    torch::manual_seed(seed);
    Generator g(small_config());
    {
      torch::NoGradGuard ng;
      g->tail->weight.normal_(0.0, 0.05);
    }
    const auto x = torch::rand({2, 3, 16, 16});
    const auto y = g->forward(x);
    (y - torch::rand_like(y)).abs().mean().backward();
    for (const auto& p : g->named_parameters()) {
      ASSERT_TRUE(p.value().grad().defined()) << p.key();
      EXPECT_TRUE(torch::isfinite(p.value().grad()).all().item<bool>()) << p.key();
      EXPECT_GT(p.value().grad().norm().item<double>(), 0.0) << p.key() << " seed " << seed;
    }
  }
}

TEST(Generator, VariantSwitchesRemoveComponents) {
  GeneratorConfig cfg = small_config();
  cfg.use_attention = false;
  cfg.use_gates = false;
  Generator plain(cfg);
  for (const auto& m : *plain->encoder) {
    EXPECT_FALSE(m->as<DenseAttentionBlockImpl>()->attention);
  }
  EXPECT_EQ(plain->gates->size(), 0u);
  Generator full(small_config());
  EXPECT_EQ(full->gates->size(), 3u);
  EXPECT_GT(count_parameters(*full), count_parameters(*plain));
}

TEST(Discriminator, PatchMapShapeWidthsAndRange) {
  Discriminator d;
  EXPECT_EQ(d->layer_width(0), 64);
  EXPECT_EQ(d->layer_width(1), 128);
  EXPECT_EQ(d->layer_width(5), 512);
  const auto a = torch::rand({2, 3, 128, 128});
  const auto p = d->forward(a, torch::rand({2, 3, 128, 128}));
  EXPECT_EQ(p.sizes(), torch::IntArrayRef({2, 1, 16, 16}));
  EXPECT_GT(p.min().item<float>(), 0.0f);
  EXPECT_LT(p.max().item<float>(), 1.0f);
  EXPECT_THROW(d->forward(a, torch::rand({2, 3, 64, 64})), InputError);
}

TEST(Conversions, ImageTensorRoundTrip) {
  const auto img = testsupport::random_image(3, 5, 7, 2);
  const auto t = image_to_tensor(img);
  EXPECT_EQ(t.sizes(), torch::IntArrayRef({1, 3, 5, 7}));
  EXPECT_EQ(tensor_to_image(t), img);
  EXPECT_EQ(images_to_tensor({img, img}).size(0), 2);
}
