#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <torch/torch.h>

namespace darkdeblur {

struct LossWeights {
  double lambda_f = 1e-2;  // perceptual
  double lambda_g = 1e-4;  // adversarial

  void validate() const;
};

struct LossBreakdown {
  double reconstruction = 0.0;
  double structure = 0.0;
  double perceptual = 0.0;
  double adversarial = 0.0;
  double total = 0.0;

  /// total = r + s + lambda_f * f + lambda_g * g.
  static LossBreakdown compose(double r, double s, double f, double g, const LossWeights& w);

  bool finite() const;
};

/// Mean absolute difference.
torch::Tensor reconstruction_loss(const torch::Tensor& output, const torch::Tensor& reference);

/// Scales usable for MS-SSIM on an h x w image: the largest m <= max_scales
/// with min(h, w) / 2^(m-1) >= 11. Zero when even one window does not fit.
int feasible_scales(std::int64_t height, std::int64_t width, int max_scales = 5);

/// Single-scale SSIM (11x11 Gaussian, sigma 1.5, valid windows), averaged
/// over batch and channels.
torch::Tensor ssim_index(const torch::Tensor& x, const torch::Tensor& y);

/// MS-SSIM with weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333), truncated
/// and renormalised when fewer scales fit; 2x2 average pooling between
/// scales; contrast-structure and luminance terms clipped at 0.
torch::Tensor ms_ssim(const torch::Tensor& x, const torch::Tensor& y, int max_scales = 5);

/// 1 - MS-SSIM, in [0, 1].
torch::Tensor structure_loss(const torch::Tensor& output, const torch::Tensor& reference);

/// Frozen image -> feature-map network used by the perceptual loss.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  /// images: N x 3 x H x W in [0, 1].
  virtual torch::Tensor features(const torch::Tensor& images) = 0;
  virtual std::string name() const = 0;
  virtual void to(torch::Device device) { (void)device; }
};

/// Features are the raw pixels.
class IdentityExtractor final : public FeatureExtractor {
 public:
  torch::Tensor features(const torch::Tensor& images) override { return images; }
  std::string name() const override { return "identity"; }
};

/// 19-layer VGG convolution stack up to the relu5_4 activation, inputs
/// normalised with ImageNet mean/std. Layer indices follow torchvision's
/// `vgg19().features` so exported weights load by name.
class Vgg19Extractor final : public FeatureExtractor {
 public:
  /// Loads a TorchScript archive produced by tools/export_vgg19.py.
  static std::shared_ptr<Vgg19Extractor> load(const std::filesystem::path& path);

  /// Same architecture with deterministic random weights. Only a structural
  /// stand-in for environments without the pretrained file.
  static std::shared_ptr<Vgg19Extractor> untrained(std::uint64_t seed);

  torch::Tensor features(const torch::Tensor& images) override;
  std::string name() const override;
  void to(torch::Device device) override;
  bool pretrained() const { return pretrained_; }

 private:
  Vgg19Extractor();

  torch::nn::Sequential layers_;
  torch::Tensor mean_;
  torch::Tensor std_;
  bool pretrained_ = false;
};

/// Environment variable consulted for the VGG-19 weights path.
inline constexpr const char* kVggWeightsEnv = "DARKDEBLUR_VGG19_WEIGHTS";

/// Resolves the perceptual extractor: explicit path, then $DARKDEBLUR_VGG19_WEIGHTS.
/// Without weights, returns the untrained stand-in if `allow_untrained`,
/// otherwise throws ConfigError explaining how to fetch the weights.
std::shared_ptr<FeatureExtractor> resolve_perceptual_extractor(
    const std::optional<std::filesystem::path>& weights, bool allow_untrained,
    std::uint64_t seed = 0);

/// ||psi(output) - psi(reference)||_1 / (H_j W_j C_j), averaged over the batch.
/// Reference features carry no gradient.
torch::Tensor perceptual_feature_loss(const torch::Tensor& output, const torch::Tensor& reference,
                                      FeatureExtractor& extractor);

inline constexpr double kProbabilityEps = 1e-7;

/// mean(-log p) over the discriminator map of generated pairs.
torch::Tensor adversarial_generator_loss(const torch::Tensor& d_fake);

/// 0.5 * mean(-log d_real - log(1 - d_fake)).
torch::Tensor discriminator_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake);

struct LossTerms {
  torch::Tensor reconstruction;
  torch::Tensor structure;
  torch::Tensor perceptual;
  torch::Tensor adversarial;
  torch::Tensor total;

  LossBreakdown breakdown() const;
};

/// L_R + L_S + lambda_f L_F + lambda_g L_G. `extractor` must be non-null.
LossTerms total_loss(const torch::Tensor& output, const torch::Tensor& reference,
                     const torch::Tensor& d_fake, FeatureExtractor* extractor,
                     const LossWeights& weights);

/// L1-only objective of the ablation variants without the multi-term loss;
/// the other terms are reported as zero.
LossTerms reconstruction_only(const torch::Tensor& output, const torch::Tensor& reference);

}  // namespace darkdeblur
