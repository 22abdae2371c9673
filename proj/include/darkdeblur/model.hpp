#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "darkdeblur/image.hpp"

namespace darkdeblur {

struct GeneratorConfig {
  std::vector<std::int64_t> feature_levels{64, 128, 192, 256};
  std::vector<std::int64_t> gate_widths{64, 128, 192};
  std::int64_t dense_layers = 5;
  std::int64_t dense_growth = 32;
  double leaky_slope = 0.2;
  /// Hidden width of the attention gating network is channels / reduction.
  std::int64_t attention_reduction = 16;
  bool use_attention = true;
  bool use_gates = true;

  void validate() const;
};

struct DiscriminatorConfig {
  std::int64_t base_width = 64;
  std::int64_t num_blocks = 6;

  void validate() const;
};

/// l convolutions (3x3, LeakyReLU), each fed the concatenation of the block
/// input and all earlier layer outputs, then a 1x1 fusion convolution back to
/// the input width.
struct DenseBlockImpl : torch::nn::Module {
  DenseBlockImpl(std::int64_t width, std::int64_t layers, std::int64_t growth, double slope);
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t width;
  double slope;
  torch::nn::ModuleList convs;
  torch::nn::Conv2d fusion{nullptr};
};
TORCH_MODULE(DenseBlock);

/// Squeeze-excitation computed on the block input:
/// scales = sigmoid(excite(relu(squeeze(mean_hw(x))))), output = scales * x.
struct ChannelAttentionImpl : torch::nn::Module {
  ChannelAttentionImpl(std::int64_t width, std::int64_t reduction);
  /// Per-channel factors, shape N x C x 1 x 1, each in (0, 1).
  torch::Tensor scales(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d squeeze{nullptr};
  torch::nn::Conv2d excite{nullptr};
};
TORCH_MODULE(ChannelAttention);

/// dense(x) + attention(x); the attention branch is absent in the base
/// ablation variant.
struct DenseAttentionBlockImpl : torch::nn::Module {
  DenseAttentionBlockImpl(std::int64_t width, const GeneratorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

  DenseBlock dense{nullptr};
  ChannelAttention attention{nullptr};
};
TORCH_MODULE(DenseAttentionBlock);

/// LeakyReLU(W_g * x) (.) sigmoid(W_f * x) with two parallel 3x3 convolutions.
struct ContextualGateImpl : torch::nn::Module {
  ContextualGateImpl(std::int64_t in_width, std::int64_t out_width, double slope);
  torch::Tensor forward(const torch::Tensor& x);

  double slope;
  torch::nn::Conv2d feature{nullptr};
  torch::nn::Conv2d gate{nullptr};
};
TORCH_MODULE(ContextualGate);

/// 3x3 convolution, stride 2, padding 1.
struct DownsampleImpl : torch::nn::Module {
  DownsampleImpl(std::int64_t in_width, std::int64_t out_width);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(Downsample);

/// 3x3 convolution to 4x the output width, depth-to-space by 2, PReLU.
struct UpsampleImpl : torch::nn::Module {
  UpsampleImpl(std::int64_t in_width, std::int64_t out_width);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::PixelShuffle shuffle{nullptr};
  torch::nn::PReLU act{nullptr};
};
TORCH_MODULE(Upsample);

/// Four-level feature-pyramid encoder/decoder. Encoder levels 0..3 each run a
/// dense-attention block with stride-2 transitions between them; the decoder
/// climbs back with pixel-shuffle transitions, adds the (gated) encoder skip of
/// the same level and runs another dense-attention block. The tail residual
/// is zero-initialised, so a fresh generator is the identity map.
struct GeneratorImpl : torch::nn::Module {
  explicit GeneratorImpl(GeneratorConfig cfg = {});

  /// x: N x 3 x H x W in [0, 1], H and W multiples of 8.
  torch::Tensor forward(const torch::Tensor& x);

  /// Arbitrary H, W: reflect-pads to the next multiple of 8 and crops back.
  torch::Tensor forward_padded(const torch::Tensor& x);

  void zero_tail();

  GeneratorConfig config;
  torch::nn::Conv2d head{nullptr};
  torch::nn::ModuleList encoder;
  torch::nn::ModuleList down;
  torch::nn::ModuleList up;
  torch::nn::ModuleList gates;
  torch::nn::ModuleList decoder;
  torch::nn::Conv2d tail{nullptr};
};
TORCH_MODULE(Generator);

/// Conditional patch discriminator over (candidate, condition) pairs
/// concatenated to 6 channels. Layer i is conv3x3 -> batch norm -> swish;
/// layer 0 maps to base_width, every odd layer doubles the width with
/// stride 2. A 1x1 convolution + sigmoid gives a probability map.
struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(DiscriminatorConfig cfg = {});

  torch::Tensor forward(const torch::Tensor& candidate, const torch::Tensor& condition);

  /// Channel width after layer `index`.
  std::int64_t layer_width(std::int64_t index) const;

  DiscriminatorConfig config;
  torch::nn::Sequential body;
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(Discriminator);

std::int64_t count_parameters(const torch::nn::Module& module);

/// Image (C x H x W) -> tensor 1 x C x H x W, float32.
torch::Tensor image_to_tensor(const Image& img);
/// Stacks same-sized images into N x C x H x W.
torch::Tensor images_to_tensor(const std::vector<Image>& imgs);
/// 1 x C x H x W or C x H x W tensor -> Image.
Image tensor_to_image(const torch::Tensor& t);

/// Runs the generator in inference mode on one image of any size. Throws
/// InputError for non-RGB input and IntegrityError on non-finite output.
Image deblur(Generator& generator, const Image& blurry,
             torch::Device device = torch::kCPU);

}  // namespace darkdeblur
