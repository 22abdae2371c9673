#include "darkdeblur/objectives.hpp"

#include <array>
#include <cmath>
#include <cstdlib>

#include <torch/script.h>

#include "darkdeblur/errors.hpp"

namespace darkdeblur {

namespace F = torch::nn::functional;

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr std::array<double, 5> kScaleWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

void require_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    throw InputError(std::string(what) + ": shape mismatch");
  }
}

torch::Tensor gaussian_window(std::int64_t channels, const torch::TensorOptions& options) {
  auto coords = torch::arange(kWindow, options.dtype(torch::kFloat64)) - kWindow / 2;
  auto g = torch::exp(-(coords * coords) / (2 * kSigma * kSigma));
  g = g / g.sum();
  auto w2 = torch::outer(g, g).to(options.dtype());
  return w2.expand({channels, 1, kWindow, kWindow}).contiguous();
}

// Per (N, C) means of the SSIM map and the contrast-structure map.
std::pair<torch::Tensor, torch::Tensor> ssim_terms(const torch::Tensor& x, const torch::Tensor& y) {
  const auto channels = x.size(1);
  const auto window = gaussian_window(channels, x.options());
  const auto filt = [&](const torch::Tensor& t) {
    return F::conv2d(t, window, F::Conv2dFuncOptions().groups(channels));
  };
  const auto mu_x = filt(x);
  const auto mu_y = filt(y);
  const auto var_x = filt(x * x) - mu_x * mu_x;
  const auto var_y = filt(y * y) - mu_y * mu_y;
  const auto cov = filt(x * y) - mu_x * mu_y;
  const auto cs = (2 * cov + kC2) / (var_x + var_y + kC2);
  const auto lum = (2 * mu_x * mu_y + kC1) / (mu_x * mu_x + mu_y * mu_y + kC1);
  return {(lum * cs).mean({2, 3}), cs.mean({2, 3})};
}

void require_image_batch(const torch::Tensor& x, const char* what) {
  if (x.dim() != 4) throw InputError(std::string(what) + ": expected N x C x H x W");
}

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_f >= 0.0) || !(lambda_g >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

LossBreakdown LossBreakdown::compose(double r, double s, double f, double g,
                                     const LossWeights& w) {
  return {r, s, f, g, r + s + w.lambda_f * f + w.lambda_g * g};
}

bool LossBreakdown::finite() const {
  return std::isfinite(reconstruction) && std::isfinite(structure) && std::isfinite(perceptual) &&
         std::isfinite(adversarial) && std::isfinite(total);
}

torch::Tensor reconstruction_loss(const torch::Tensor& output, const torch::Tensor& reference) {
  require_same(output, reference, "reconstruction_loss");
  return (output - reference).abs().mean();
}

int feasible_scales(std::int64_t height, std::int64_t width, int max_scales) {
  std::int64_t side = std::min(height, width);
  int scales = 0;
  while (scales < max_scales && side >= kWindow) {
    ++scales;
    side /= 2;
  }
  return scales;
}

torch::Tensor ssim_index(const torch::Tensor& x, const torch::Tensor& y) {
  require_same(x, y, "ssim");
  require_image_batch(x, "ssim");
  if (feasible_scales(x.size(2), x.size(3)) == 0) {
    throw InputError("ssim: image smaller than the 11x11 window");
  }
  return ssim_terms(x, y).first.mean();
}

torch::Tensor ms_ssim(const torch::Tensor& x, const torch::Tensor& y, int max_scales) {
  require_same(x, y, "ms_ssim");
  require_image_batch(x, "ms_ssim");
  const int scales = feasible_scales(x.size(2), x.size(3), max_scales);
  if (scales == 0) throw InputError("structure loss: image smaller than the 11x11 window");

  double weight_sum = 0.0;
  for (int j = 0; j < scales; ++j) weight_sum += kScaleWeights[j];

  torch::Tensor a = x;
  torch::Tensor b = y;
  torch::Tensor product;
  for (int j = 0; j < scales; ++j) {
    auto [full, cs] = ssim_terms(a, b);
    const bool last = j == scales - 1;
    auto term = torch::pow(torch::relu(last ? full : cs), kScaleWeights[j] / weight_sum);
    product = product.defined() ? product * term : term;
    if (!last) {
      a = F::avg_pool2d(a, F::AvgPool2dFuncOptions(2));
      b = F::avg_pool2d(b, F::AvgPool2dFuncOptions(2));
    }
  }
  return product.mean();
}

torch::Tensor structure_loss(const torch::Tensor& output, const torch::Tensor& reference) {
  return 1.0 - ms_ssim(output, reference);
}

// ---------------------------------------------------------------------------

Vgg19Extractor::Vgg19Extractor() {
  // torchvision vgg19().features[:36]: 16 conv+relu pairs, 4 max-pools.
  const int plan[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0,
                      512, 512, 512, 512, 0, 512, 512, 512, 512};
  std::int64_t in = 3;
  for (int width : plan) {
    if (width == 0) {
      layers_->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
      continue;
    }
    layers_->push_back(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, width, 3).padding(1)));
    layers_->push_back(torch::nn::ReLU());
    in = width;
  }
  for (auto& p : layers_->parameters()) p.set_requires_grad(false);
  layers_->eval();
  mean_ = torch::tensor({0.485, 0.456, 0.406}, torch::kFloat32).view({1, 3, 1, 1});
  std_ = torch::tensor({0.229, 0.224, 0.225}, torch::kFloat32).view({1, 3, 1, 1});
}

std::shared_ptr<Vgg19Extractor> Vgg19Extractor::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("VGG-19 weights not found at " + path.string() +
                      "; run tools/export_vgg19.py to fetch them");
  }
  torch::jit::script::Module scripted;
  try {
    scripted = torch::jit::load(path.string(), torch::kCPU);
  } catch (const c10::Error& e) {
    throw ConfigError("cannot read VGG-19 weights " + path.string() + ": " + e.what_without_backtrace());
  }
  std::shared_ptr<Vgg19Extractor> out(new Vgg19Extractor());
  auto params = out->layers_->named_parameters();
  std::size_t loaded = 0;
  torch::NoGradGuard no_grad;
  for (const auto& item : scripted.named_parameters()) {
    if (auto* dst = params.find(item.name)) {
      if (!dst->sizes().equals(item.value.sizes())) {
        throw ConfigError("VGG-19 weight " + item.name + " has an unexpected shape");
      }
      dst->copy_(item.value);
      ++loaded;
    }
  }
  if (loaded != params.size()) {
    throw ConfigError("VGG-19 weights file " + path.string() + " is incomplete (" +
                      std::to_string(loaded) + "/" + std::to_string(params.size()) + " tensors)");
  }
  out->pretrained_ = true;
  return out;
}

std::shared_ptr<Vgg19Extractor> Vgg19Extractor::untrained(std::uint64_t seed) {
  torch::manual_seed(seed);
  auto out = std::shared_ptr<Vgg19Extractor>(new Vgg19Extractor());
  // He-normal keeps activations at unit scale through the 16 conv layers;
  // the default init shrinks them to nothing by relu5_4.
  torch::NoGradGuard no_grad;
  for (auto& item : out->layers_->named_parameters()) {
    if (item.key().ends_with("weight")) {
      torch::nn::init::kaiming_normal_(item.value(), 0.0, torch::kFanIn, torch::kReLU);
    } else {
      item.value().zero_();
    }
  }
  return out;
}

torch::Tensor Vgg19Extractor::features(const torch::Tensor& images) {
  return layers_->forward((images - mean_.to(images.options())) / std_.to(images.options()));
}

std::string Vgg19Extractor::name() const {
  return pretrained_ ? "vgg19-relu5_4" : "vgg19-relu5_4-untrained";
}

void Vgg19Extractor::to(torch::Device device) {
  layers_->to(device);
  mean_ = mean_.to(device);
  std_ = std_.to(device);
}

std::shared_ptr<FeatureExtractor> resolve_perceptual_extractor(
    const std::optional<std::filesystem::path>& weights, bool allow_untrained,
    std::uint64_t seed) {
  if (weights) return Vgg19Extractor::load(*weights);
  if (const char* env = std::getenv(kVggWeightsEnv); env && *env) {
    return Vgg19Extractor::load(env);
  }
  if (allow_untrained) return Vgg19Extractor::untrained(seed);
  throw ConfigError(
      std::string("the perceptual loss needs pretrained VGG-19 weights: run "
                  "`python3 tools/export_vgg19.py vgg19.pt` and pass --vgg-weights vgg19.pt "
                  "(or set ") +
      kVggWeightsEnv + ")");
}

torch::Tensor perceptual_feature_loss(const torch::Tensor& output, const torch::Tensor& reference,
                                      FeatureExtractor& extractor) {
  require_same(output, reference, "perceptual_feature_loss");
  torch::Tensor ref_features;
  {
    torch::NoGradGuard no_grad;
    ref_features = extractor.features(reference);
  }
  return (extractor.features(output) - ref_features).abs().mean();
}

torch::Tensor adversarial_generator_loss(const torch::Tensor& d_fake) {
  return -torch::log(d_fake.clamp(kProbabilityEps, 1.0 - kProbabilityEps)).mean();
}

torch::Tensor discriminator_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  const auto real = d_real.clamp(kProbabilityEps, 1.0 - kProbabilityEps);
  const auto fake = d_fake.clamp(kProbabilityEps, 1.0 - kProbabilityEps);
  return 0.5 * (-torch::log(real).mean() - torch::log(1.0 - fake).mean());
}

LossBreakdown LossTerms::breakdown() const {
  const auto value = [](const torch::Tensor& t) {
    return t.defined() ? t.detach().item<double>() : 0.0;
  };
  return {value(reconstruction), value(structure), value(perceptual), value(adversarial),
          value(total)};
}

LossTerms total_loss(const torch::Tensor& output, const torch::Tensor& reference,
                     const torch::Tensor& d_fake, FeatureExtractor* extractor,
                     const LossWeights& weights) {
  if (extractor == nullptr) {
    throw ConfigError("perceptual feature extractor unavailable; run tools/export_vgg19.py");
  }
  LossTerms t;
  t.reconstruction = reconstruction_loss(output, reference);
  t.structure = structure_loss(output, reference);
  t.perceptual = perceptual_feature_loss(output, reference, *extractor);
  t.adversarial = adversarial_generator_loss(d_fake);
  t.total = t.reconstruction + t.structure + weights.lambda_f * t.perceptual +
            weights.lambda_g * t.adversarial;
  return t;
}

LossTerms reconstruction_only(const torch::Tensor& output, const torch::Tensor& reference) {
  LossTerms t;
  t.reconstruction = reconstruction_loss(output, reference);
  t.total = t.reconstruction;
  return t;
}

}  // namespace darkdeblur
