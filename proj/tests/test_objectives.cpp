#include <gtest/gtest.h>

#include <cmath>

#include "darkdeblur/errors.hpp"
#include "darkdeblur/objectives.hpp"

using namespace darkdeblur;

namespace {

const double kLn2 = std::log(2.0);

double mean_abs_oracle(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.to(torch::kDouble).contiguous().view(-1);
  auto y = b.to(torch::kDouble).contiguous().view(-1);
  const double* p = x.data_ptr<double>();
  const double* q = y.data_ptr<double>();
  double s = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) s += std::abs(p[i] - q[i]);
  return s / static_cast<double>(x.numel());
}

double relative_error(const torch::Tensor& a, const torch::Tensor& b) {
  return (a - b).norm().item<double>() /
         std::max(a.norm().item<double>(), b.norm().item<double>());
}

}  // namespace

TEST(LossWeights, DefaultsAndValidation) {
  LossWeights w;
  EXPECT_EQ(w.lambda_f, 1e-2);
  EXPECT_EQ(w.lambda_g, 1e-4);
  w.lambda_g = -1.0;
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(LossBreakdown, ComposeArithmetic) {
  const auto b = LossBreakdown::compose(0.1, 0.2, 3.0, 0.7, LossWeights{});
  EXPECT_NEAR(b.total, 0.33007, 1e-15);
  EXPECT_TRUE(b.finite());
  EXPECT_FALSE(LossBreakdown::compose(NAN, 0, 0, 0, {}).finite());
}

TEST(Reconstruction, ValuesAndOracle) {
  const auto x = torch::rand({2, 3, 8, 8});
  EXPECT_EQ(reconstruction_loss(x, x).item<float>(), 0.0f);
  EXPECT_EQ(reconstruction_loss(torch::zeros({1, 3, 4, 4}), torch::ones({1, 3, 4, 4})).item<float>(), 1.0f);
  const auto y = torch::rand({2, 3, 8, 8});
  EXPECT_NEAR(reconstruction_loss(x, y).item<double>(), mean_abs_oracle(x, y), 1e-7);
  EXPECT_THROW(reconstruction_loss(x, torch::rand({2, 3, 8, 9})), InputError);
}

TEST(Reconstruction, MonotoneInNoiseAmplitude) {
  torch::manual_seed(1);
  const auto x = torch::rand({1, 3, 32, 32});
  const auto n = torch::randn_like(x);
  double prev = -1.0;
  for (double d : {0.01, 0.05, 0.1}) {
    const double v = reconstruction_loss(x + d * n, x).item<double>();
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(Structure, ScaleCount) {
  EXPECT_EQ(feasible_scales(176, 176), 5);
  EXPECT_EQ(feasible_scales(175, 400), 4);
  EXPECT_EQ(feasible_scales(128, 128), 4);
  EXPECT_EQ(feasible_scales(16, 16), 1);
  EXPECT_EQ(feasible_scales(10, 64), 0);
}

TEST(Structure, IdentityRangeAndTooSmall) {
  const auto x = torch::rand({2, 3, 64, 64});
  EXPECT_NEAR(structure_loss(x, x).item<double>(), 0.0, 1e-6);
  const auto noise = torch::rand({2, 3, 64, 64});
  const double v = structure_loss(x, noise).item<double>();
  EXPECT_GT(v, 0.0);
  EXPECT_LE(v, 1.0);
  EXPECT_THROW(structure_loss(torch::rand({1, 3, 8, 8}), torch::rand({1, 3, 8, 8})), InputError);
}

TEST(Structure, ClosedFormConstantPair) {
  const double a = 0.3, b = 0.5;
  const auto x = torch::full({1, 1, 16, 16}, a, torch::kDouble);
  const auto y = torch::full({1, 1, 16, 16}, b, torch::kDouble);
  const double c1 = 1e-4;
  const double want = (2 * a * b + c1) / (a * a + b * b + c1);  // contrast term is C2/C2
  EXPECT_NEAR(ssim_index(x, y).item<double>(), want, 1e-9);
  EXPECT_NEAR(ms_ssim(x, y).item<double>(), want, 1e-9);
}

TEST(Perceptual, IdentityExtractorReducesToReconstruction) {
  IdentityExtractor id;
  const auto a = torch::rand({2, 3, 16, 16});
  const auto b = torch::rand({2, 3, 16, 16});
  EXPECT_EQ(perceptual_feature_loss(a, b, id).item<float>(), reconstruction_loss(a, b).item<float>());
  EXPECT_EQ(perceptual_feature_loss(a, a, id).item<float>(), 0.0f);
}

TEST(Perceptual, VggStandInIsSymmetricAndFrozen) {
  auto vgg = Vgg19Extractor::untrained(4);
  EXPECT_FALSE(vgg->pretrained());
  const auto a = torch::rand({1, 3, 32, 32});
  const auto b = torch::rand({1, 3, 32, 32});
  const auto ab = perceptual_feature_loss(a, b, *vgg).item<float>();
  EXPECT_GT(ab, 0.0f);
  EXPECT_FLOAT_EQ(ab, perceptual_feature_loss(b, a, *vgg).item<float>());
  EXPECT_NEAR(perceptual_feature_loss(a, a, *vgg).item<float>(), 0.0f, 1e-6);
  EXPECT_EQ(vgg->features(a).size(1), 512);
}

TEST(Perceptual, MissingWeightsExplainHowToFetch) {
  ::unsetenv(kVggWeightsEnv);
  try {
    resolve_perceptual_extractor(std::nullopt, false);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("export_vgg19.py"), std::string::npos);
  }
  EXPECT_THROW(Vgg19Extractor::load("/nonexistent/vgg.pt"), ConfigError);
  EXPECT_NE(resolve_perceptual_extractor(std::nullopt, true), nullptr);
}

TEST(Adversarial, AnalyticValues) {
  const auto half = torch::full({2, 1, 4, 4}, 0.5, torch::kDouble);
  EXPECT_NEAR(adversarial_generator_loss(half).item<double>(), kLn2, 1e-9);
  EXPECT_NEAR(adversarial_generator_loss(torch::full({1, 1, 2, 2}, 0.25, torch::kDouble)).item<double>(),
              std::log(4.0), 1e-9);
  EXPECT_NEAR(adversarial_generator_loss(torch::ones({1, 1, 2, 2}, torch::kDouble)).item<double>(),
              0.0, 1e-6);
  EXPECT_NEAR(discriminator_loss(half, half).item<double>(), kLn2, 1e-9);
  EXPECT_NEAR(discriminator_loss(torch::full({1, 1, 2, 2}, 0.9, torch::kDouble),
                                 torch::full({1, 1, 2, 2}, 0.1, torch::kDouble))
                  .item<double>(),
              -std::log(0.9), 1e-9);
  const double perfect = discriminator_loss(torch::ones({1, 1, 2, 2}, torch::kDouble),
                                            torch::zeros({1, 1, 2, 2}, torch::kDouble))
                             .item<double>();
  EXPECT_TRUE(std::isfinite(perfect));
  EXPECT_NEAR(perfect, 0.0, 1e-6);
}

TEST(TotalLoss, IdentityComposition) {
  IdentityExtractor id;
  const auto x = torch::rand({1, 3, 32, 32}, torch::kDouble);
  const auto terms = total_loss(x, x, torch::full({1, 1, 4, 4}, 0.5, torch::kDouble), &id, {});
  const auto b = terms.breakdown();
  EXPECT_NEAR(b.reconstruction, 0.0, 1e-6);
  EXPECT_NEAR(b.structure, 0.0, 1e-6);
  EXPECT_NEAR(b.perceptual, 0.0, 1e-6);
  EXPECT_NEAR(b.adversarial, kLn2, 1e-9);
  EXPECT_NEAR(b.total, 1e-4 * kLn2, 1e-9);
  EXPECT_THROW(total_loss(x, x, torch::full({1, 1, 4, 4}, 0.5), nullptr, {}), ConfigError);
}

TEST(TotalLoss, BreakdownComposesExactly) {
  IdentityExtractor id;
  const auto a = torch::rand({2, 3, 24, 24});
  const auto b = torch::rand({2, 3, 24, 24});
  const auto d = torch::rand({2, 1, 3, 3}) * 0.98 + 0.01;
  const auto br = total_loss(a, b, d, &id, {}).breakdown();
  const double composed = br.reconstruction + br.structure + 1e-2 * br.perceptual + 1e-4 * br.adversarial;
  EXPECT_NEAR(br.total, composed, 1e-6 * std::abs(composed));
  EXPECT_GE(br.reconstruction, 0.0);
  EXPECT_GE(br.structure, 0.0);
  EXPECT_GE(br.perceptual, 0.0);
  EXPECT_GE(br.adversarial, 0.0);
}

TEST(TotalLoss, ReconstructionOnlyReportsZerosForOtherTerms) {
  const auto a = torch::rand({1, 3, 16, 16});
  const auto b = torch::rand({1, 3, 16, 16});
  const auto br = reconstruction_only(a, b).breakdown();
  EXPECT_EQ(br.total, br.reconstruction);
  EXPECT_EQ(br.structure, 0.0);
  EXPECT_EQ(br.adversarial, 0.0);
}

TEST(TotalLoss, FiniteDifferenceGradient) {
  torch::manual_seed(5);
  IdentityExtractor id;
  const auto reference = torch::rand({1, 3, 16, 16}, torch::kDouble);
  const auto output = (reference + 0.1 * torch::randn_like(reference)).requires_grad_(true);
  const auto d_fake = torch::full({1, 1, 2, 2}, 0.3, torch::kDouble);
  const auto f = [&](const torch::Tensor& o) { return total_loss(o, reference, d_fake, &id, {}).total; };

  f(output).backward();
  const auto analytic = output.grad().clone();
  auto numeric = torch::zeros_like(analytic);
  const double h = 1e-6;
  torch::NoGradGuard g;
  auto flat = output.detach().clone().view(-1);
  for (std::int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + h;
    const double up = f(flat.view_as(output)).item<double>();
    flat[i] = orig - h;
    const double down = f(flat.view_as(output)).item<double>();
    flat[i] = orig;
    numeric.view(-1)[i] = (up - down) / (2 * h);
  }
  EXPECT_LT(relative_error(analytic, numeric), 1e-5);
}
