#include "darkdeblur/model.hpp"

#include <algorithm>
#include <string>

#include "darkdeblur/errors.hpp"

namespace darkdeblur {

namespace F = torch::nn::functional;
using torch::nn::Conv2d;
using torch::nn::Conv2dOptions;

void GeneratorConfig::validate() const {
  if (feature_levels.size() != 4) throw ConfigError("feature_levels must have 4 entries");
  for (std::size_t i = 0; i < feature_levels.size(); ++i) {
    if (feature_levels[i] <= 0 || (i > 0 && feature_levels[i] <= feature_levels[i - 1])) {
      throw ConfigError("feature_levels must be positive and strictly increasing");
    }
  }
  if (gate_widths.size() != 3) throw ConfigError("gate_widths must have 3 entries");
  for (std::size_t i = 0; i < 3; ++i) {
    if (gate_widths[i] != feature_levels[i]) {
      throw ConfigError("gate_widths must match feature_levels[0..3]");
    }
  }
  if (dense_layers < 1) throw ConfigError("dense_layers must be >= 1");
  if (dense_growth <= 0) throw ConfigError("dense_growth must be > 0");
  if (attention_reduction < 1) throw ConfigError("attention_reduction must be >= 1");
  if (!(leaky_slope >= 0.0)) throw ConfigError("leaky_slope must be >= 0");
}

void DiscriminatorConfig::validate() const {
  if (base_width <= 0) throw ConfigError("discriminator base_width must be > 0");
  if (num_blocks < 1) throw ConfigError("discriminator num_blocks must be >= 1");
}

// ---------------------------------------------------------------------------

DenseBlockImpl::DenseBlockImpl(std::int64_t width, std::int64_t layers, std::int64_t growth,
                               double slope)
    : width(width), slope(slope) {
  for (std::int64_t i = 0; i < layers; ++i) {
    convs->push_back(Conv2d(Conv2dOptions(width + i * growth, growth, 3).padding(1)));
  }
  register_module("convs", convs);
  fusion = register_module("fusion", Conv2d(Conv2dOptions(width + layers * growth, width, 1)));
}

torch::Tensor DenseBlockImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != width) {
    throw ConfigError("dense block expects " + std::to_string(width) + " channels, got " +
                      (x.dim() == 4 ? std::to_string(x.size(1)) : std::string("rank ") +
                                                                        std::to_string(x.dim())));
  }
  std::vector<torch::Tensor> features{x};
  for (const auto& layer : *convs) {
    auto y = layer->as<torch::nn::Conv2dImpl>()->forward(torch::cat(features, 1));
    features.push_back(F::leaky_relu(y, F::LeakyReLUFuncOptions().negative_slope(slope)));
  }
  return fusion->forward(torch::cat(features, 1));
}

ChannelAttentionImpl::ChannelAttentionImpl(std::int64_t width, std::int64_t reduction) {
  const std::int64_t hidden = std::max<std::int64_t>(1, width / reduction);
  squeeze = register_module("squeeze", Conv2d(Conv2dOptions(width, hidden, 1)));
  excite = register_module("excite", Conv2d(Conv2dOptions(hidden, width, 1)));
  // With only C/16 hidden units, a default-initialised squeeze layer often
  // starts with every unit below zero and the branch never receives gradient.
  torch::NoGradGuard no_grad;
  squeeze->bias.fill_(1.0);
}

torch::Tensor ChannelAttentionImpl::scales(const torch::Tensor& x) {
  auto z = x.mean({2, 3}, /*keepdim=*/true);
  return torch::sigmoid(excite->forward(torch::relu(squeeze->forward(z))));
}

torch::Tensor ChannelAttentionImpl::forward(const torch::Tensor& x) { return scales(x) * x; }

DenseAttentionBlockImpl::DenseAttentionBlockImpl(std::int64_t width, const GeneratorConfig& cfg) {
  dense = register_module(
      "dense", DenseBlock(width, cfg.dense_layers, cfg.dense_growth, cfg.leaky_slope));
  if (cfg.use_attention) {
    attention = register_module("attention", ChannelAttention(width, cfg.attention_reduction));
  }
}

torch::Tensor DenseAttentionBlockImpl::forward(const torch::Tensor& x) {
  auto out = dense->forward(x);
  if (attention) out = out + attention->forward(x);
  return out;
}

ContextualGateImpl::ContextualGateImpl(std::int64_t in_width, std::int64_t out_width, double slope)
    : slope(slope) {
  feature = register_module("feature", Conv2d(Conv2dOptions(in_width, out_width, 3).padding(1)));
  gate = register_module("gate", Conv2d(Conv2dOptions(in_width, out_width, 3).padding(1)));
}

torch::Tensor ContextualGateImpl::forward(const torch::Tensor& x) {
  return F::leaky_relu(feature->forward(x), F::LeakyReLUFuncOptions().negative_slope(slope)) *
         torch::sigmoid(gate->forward(x));
}

DownsampleImpl::DownsampleImpl(std::int64_t in_width, std::int64_t out_width) {
  conv = register_module("conv",
                         Conv2d(Conv2dOptions(in_width, out_width, 3).stride(2).padding(1)));
}

torch::Tensor DownsampleImpl::forward(const torch::Tensor& x) { return conv->forward(x); }

UpsampleImpl::UpsampleImpl(std::int64_t in_width, std::int64_t out_width) {
  conv = register_module("conv", Conv2d(Conv2dOptions(in_width, 4 * out_width, 3).padding(1)));
  shuffle = register_module("shuffle", torch::nn::PixelShuffle(2));
  act = register_module("act", torch::nn::PReLU());
}

torch::Tensor UpsampleImpl::forward(const torch::Tensor& x) {
  return act->forward(shuffle->forward(conv->forward(x)));
}

// ---------------------------------------------------------------------------

GeneratorImpl::GeneratorImpl(GeneratorConfig cfg) : config(std::move(cfg)) {
  config.validate();
  const auto& w = config.feature_levels;
  head = register_module("head", Conv2d(Conv2dOptions(3, w[0], 3).padding(1)));
  for (std::size_t i = 0; i < 4; ++i) encoder->push_back(DenseAttentionBlock(w[i], config));
  for (std::size_t i = 0; i < 3; ++i) {
    down->push_back(Downsample(w[i], w[i + 1]));
    up->push_back(Upsample(w[i + 1], w[i]));
    decoder->push_back(DenseAttentionBlock(w[i], config));
    if (config.use_gates) {
      gates->push_back(ContextualGate(w[i], config.gate_widths[i], config.leaky_slope));
    }
  }
  register_module("encoder", encoder);
  register_module("down", down);
  register_module("up", up);
  register_module("decoder", decoder);
  if (config.use_gates) register_module("gates", gates);
  tail = register_module("tail", Conv2d(Conv2dOptions(w[0], 3, 3).padding(1)));
  zero_tail();
}

void GeneratorImpl::zero_tail() {
  torch::NoGradGuard no_grad;
  tail->weight.zero_();
  tail->bias.zero_();
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) {
    throw InputError("generator expects N x 3 x H x W input");
  }
  if (x.size(2) % 8 != 0 || x.size(3) % 8 != 0) {
    throw InputError("generator input height/width must be multiples of 8 (use forward_padded)");
  }
  std::vector<torch::Tensor> skips;
  auto s = head->forward(x);
  for (std::size_t i = 0; i < 4; ++i) {
    s = encoder[i]->as<DenseAttentionBlockImpl>()->forward(s);
    if (i < 3) {
      skips.push_back(s);
      s = down[i]->as<DownsampleImpl>()->forward(s);
    }
  }
  for (int i = 2; i >= 0; --i) {
    s = up[i]->as<UpsampleImpl>()->forward(s);
    const auto& skip = skips[i];
    s = s + (config.use_gates ? gates[i]->as<ContextualGateImpl>()->forward(skip) : skip);
    s = decoder[i]->as<DenseAttentionBlockImpl>()->forward(s);
  }
  return torch::clamp(x + tail->forward(s), 0.0, 1.0);
}

torch::Tensor GeneratorImpl::forward_padded(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) {
    throw InputError("generator expects N x 3 x H x W input");
  }
  const std::int64_t h = x.size(2);
  const std::int64_t w = x.size(3);
  const std::int64_t pad_h = (8 - h % 8) % 8;
  const std::int64_t pad_w = (8 - w % 8) % 8;
  if (pad_h == 0 && pad_w == 0) return forward(x);
  const bool reflect_ok = pad_h < h && pad_w < w;
  auto options = F::PadFuncOptions({0, pad_w, 0, pad_h});
  if (reflect_ok) {
    options.mode(torch::kReflect);
  } else {
    options.mode(torch::kReplicate);
  }
  auto padded = F::pad(x, options);
  using torch::indexing::Slice;
  return forward(padded).index({Slice(), Slice(), Slice(0, h), Slice(0, w)});
}

// ---------------------------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig cfg) : config(cfg) {
  config.validate();
  std::int64_t in = 6;
  for (std::int64_t i = 0; i < config.num_blocks; ++i) {
    const std::int64_t out = layer_width(i);
    const std::int64_t stride = (i % 2 == 1) ? 2 : 1;
    body->push_back(Conv2d(Conv2dOptions(in, out, 3).stride(stride).padding(1)));
    body->push_back(torch::nn::BatchNorm2d(torch::nn::BatchNormOptions(out).momentum(0.1)));
    body->push_back(torch::nn::SiLU());
    in = out;
  }
  register_module("body", body);
  head = register_module("head", Conv2d(Conv2dOptions(in, 1, 1)));
}

std::int64_t DiscriminatorImpl::layer_width(std::int64_t index) const {
  return config.base_width << ((index + 1) / 2);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& candidate,
                                         const torch::Tensor& condition) {
  if (!candidate.sizes().equals(condition.sizes())) {
    throw InputError("discriminator: candidate and condition shapes differ");
  }
  if (candidate.dim() != 4 || candidate.size(1) != 3) {
    throw InputError("discriminator expects N x 3 x H x W images");
  }
  return torch::sigmoid(head->forward(body->forward(torch::cat({candidate, condition}, 1))));
}

// ---------------------------------------------------------------------------

std::int64_t count_parameters(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

torch::Tensor image_to_tensor(const Image& img) {
  auto data = img.data();
  return torch::from_blob(const_cast<float*>(data.data()),
                          {1, img.channels(), img.height(), img.width()}, torch::kFloat32)
      .clone();
}

torch::Tensor images_to_tensor(const std::vector<Image>& imgs) {
  if (imgs.empty()) throw InputError("cannot stack an empty image list");
  std::vector<torch::Tensor> parts;
  parts.reserve(imgs.size());
  for (const auto& img : imgs) {
    require_same_shape(imgs.front(), img, "batch");
    parts.push_back(image_to_tensor(img));
  }
  return torch::cat(parts, 0);
}

Image tensor_to_image(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  if (x.dim() == 4) {
    if (x.size(0) != 1) throw InputError("tensor_to_image expects a single image");
    x = x[0];
  }
  if (x.dim() != 3) throw InputError("tensor_to_image expects C x H x W");
  Image out(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)), static_cast<int>(x.size(2)));
  std::copy_n(x.data_ptr<float>(), out.size(), out.data().begin());
  return out;
}

Image deblur(Generator& generator, const Image& blurry, torch::Device device) {
  if (blurry.channels() != 3) throw InputError("deblur expects a 3-channel image");
  torch::NoGradGuard no_grad;
  generator->eval();
  auto out = generator->forward_padded(image_to_tensor(blurry).to(device));
  if (!torch::isfinite(out).all().item<bool>()) {
    throw IntegrityError("generator produced non-finite values");
  }
  return tensor_to_image(out);
}

}  // namespace darkdeblur
